"""Success/coverage metrics, threshold sweeps, and area under the success-coverage curve."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import GripperModel, pairwise_grasp_distance
from .grasps import as_pose
from .quality import success_oracle
from .scene import Scene

COVERAGE_RADIUS = 0.02

__all__ = [
    "COVERAGE_RADIUS",
    "SuccessCoverageCurve",
    "SuccessStats",
    "auc",
    "coverage",
    "covered_by_threshold",
    "curve_from_counts",
    "curve_sweep",
    "success_flags",
    "success_oracle",
    "success_rate",
    "success_stats",
]


def coverage(generated: Sequence, reference_positives: Sequence, gripper: GripperModel, radius: float = COVERAGE_RADIUS) -> float:
    """Fraction of reference grasps with some generated grasp strictly closer than ``radius``."""
    if len(reference_positives) == 0:
        raise ValueError("coverage needs at least one reference grasp")
    if len(generated) == 0:
        return 0.0
    d = pairwise_grasp_distance([as_pose(g) for g in generated], [as_pose(r) for r in reference_positives], gripper)
    return float(np.mean(d.min(axis=0) < radius))


@dataclass(frozen=True)
class SuccessStats:
    successes: int
    attempts: int

    @property
    def empty(self) -> bool:
        return self.attempts == 0

    @property
    def rate(self) -> float:
        # no attempts means no failures; callers can tell via ``empty``
        return 1.0 if self.attempts == 0 else self.successes / self.attempts


def success_flags(generated: Sequence, scene: Scene, target: int, gripper: GripperModel, friction_mu: float = 0.5) -> np.ndarray:
    return np.array([success_oracle(as_pose(g), scene, target, gripper, friction_mu) for g in generated], dtype=bool)


def success_stats(generated: Sequence, scene: Scene, target: int, gripper: GripperModel, friction_mu: float = 0.5) -> SuccessStats:
    flags = success_flags(generated, scene, target, gripper, friction_mu)
    return SuccessStats(int(flags.sum()), len(flags))


def success_rate(generated: Sequence, scene: Scene, target: int, gripper: GripperModel, friction_mu: float = 0.5) -> float:
    return success_stats(generated, scene, target, gripper, friction_mu).rate


# --------------------------------------------------------------------------- curves


@dataclass(frozen=True)
class SuccessCoverageCurve:
    """Operating points sorted by strictly increasing coverage."""

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...] = ()
    empty_flags: tuple[bool, ...] = ()

    @property
    def coverages(self) -> np.ndarray:
        return np.array([c for c, _ in self.points])

    @property
    def success_rates(self) -> np.ndarray:
        return np.array([s for _, s in self.points])

    @property
    def auc(self) -> float:
        return auc(self)

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "auc": self.auc}


def _dedup(points: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Sort by coverage and keep the best success rate at each repeated coverage value."""
    best: dict[float, float] = {}
    for c, s in points:
        best[c] = max(s, best.get(c, -np.inf))
    return tuple((float(c), float(best[c])) for c in sorted(best))


def auc(curve) -> float:
    """Trapezoid area over coverage from 0 to the largest coverage reached.

    The curve is held flat from coverage 0 up to its first point.
    """
    pts = curve.points if isinstance(curve, SuccessCoverageCurve) else _dedup(curve)
    if len(pts) == 0:
        raise ValueError("auc needs at least one point")
    c = np.array([p[0] for p in pts], dtype=float)
    s = np.array([p[1] for p in pts], dtype=float)
    if c[0] > 0.0:
        c = np.r_[0.0, c]
        s = np.r_[s[0], s]
    return float(np.sum(0.5 * (s[1:] + s[:-1]) * np.diff(c)))


def covered_by_threshold(scores: np.ndarray, dist: np.ndarray, radius: float = COVERAGE_RADIUS) -> np.ndarray:
    """Per reference grasp, the highest score among generated grasps within ``radius`` (``-inf`` if none).

    A reference is covered at threshold ``t`` exactly when this value is ``>= t``.
    """
    scores = np.asarray(scores, dtype=float)
    if dist.size == 0:
        return np.full(dist.shape[1], -np.inf)
    near = dist < radius
    return np.where(near, scores[:, None], -np.inf).max(axis=0)


def curve_from_counts(
    covered: np.ndarray, n_reference: int, successes: np.ndarray, attempts: np.ndarray, thresholds: Sequence[float]
) -> SuccessCoverageCurve:
    """Assemble a curve from per-threshold counts (scene-pooled or single-scene)."""
    pts, flags = [], []
    for cov, suc, att in zip(covered, successes, attempts):
        c = float(cov) / n_reference if n_reference else 0.0
        pts.append((c, SuccessStats(int(suc), int(att)).rate))
        flags.append(int(att) == 0)
    return SuccessCoverageCurve(_dedup(pts), tuple(float(t) for t in thresholds), tuple(flags))


def threshold_counts(scores, success, best_near, thresholds):
    """(covered, successes, attempts) for each threshold, selecting grasps with score ``>= t``."""
    scores = np.asarray(scores, dtype=float)
    success = np.asarray(success, dtype=bool)
    t = np.asarray(thresholds, dtype=float)[:, None]
    sel = scores[None, :] >= t
    covered = (np.asarray(best_near)[None, :] >= t).sum(axis=1)
    return covered, (sel & success[None, :]).sum(axis=1), sel.sum(axis=1)


def topk_counts(scores, success, dist, radius: float = COVERAGE_RADIUS):
    """Counts for the operating points "best k grasps", k = 1..n (ties broken by lower index)."""
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(len(scores)), -scores))
    near = dist[order] < radius
    covered = np.cumsum(near, axis=0) > 0 if len(order) else np.zeros((0, dist.shape[1]), dtype=bool)
    succ = np.cumsum(np.asarray(success, dtype=bool)[order])
    return covered.sum(axis=1), succ, np.arange(1, len(order) + 1)


def curve_sweep(
    scored: Sequence[tuple],
    reference: Sequence,
    scene: Scene,
    target: int,
    gripper: GripperModel,
    friction_mu: float = 0.5,
    mode: str = "threshold",
    radius: float = COVERAGE_RADIUS,
    success: np.ndarray | None = None,
) -> SuccessCoverageCurve:
    """Trace (coverage, success rate) over operating points of a scored grasp set.

    ``mode="threshold"`` keeps grasps with score at or above each distinct
    score; ``mode="topk"`` keeps the best k. ``success`` may carry precomputed
    oracle outcomes for the grasps.
    """
    grasps = [g for g, _ in scored]
    scores = np.array([float(s) for _, s in scored])
    if success is None:
        success = success_flags(grasps, scene, target, gripper, friction_mu)
    if len(reference) == 0:
        raise ValueError("curve_sweep needs reference grasps")
    dist = pairwise_grasp_distance([as_pose(g) for g in grasps], [as_pose(r) for r in reference], gripper)
    if mode == "threshold":
        thresholds = np.unique(scores)[::-1]
        cov, suc, att = threshold_counts(scores, success, covered_by_threshold(scores, dist, radius), thresholds)
    elif mode == "topk":
        cov, suc, att = topk_counts(scores, success, dist, radius)
        thresholds = np.sort(scores)[::-1]
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    return curve_from_counts(cov, len(reference), suc, att, thresholds)


# --------------------------------------------------------------------------- benchmark aggregation


@dataclass
class VariantCounts:
    """Per-scene counts at a fixed threshold grid, stacked over scenes."""

    covered: list[np.ndarray] = field(default_factory=list)
    successes: list[np.ndarray] = field(default_factory=list)
    attempts: list[np.ndarray] = field(default_factory=list)

    def add(self, covered, successes, attempts) -> None:
        self.covered.append(np.asarray(covered, dtype=np.int64))
        self.successes.append(np.asarray(successes, dtype=np.int64))
        self.attempts.append(np.asarray(attempts, dtype=np.int64))


def pooled_curve(counts: VariantCounts, n_reference: np.ndarray, thresholds, index=None) -> SuccessCoverageCurve:
    """Pool counts over scenes (optionally a resampled index list) and build one curve."""
    idx = np.arange(len(counts.covered)) if index is None else np.asarray(index)
    cov = np.sum([counts.covered[i] for i in idx], axis=0)
    suc = np.sum([counts.successes[i] for i in idx], axis=0)
    att = np.sum([counts.attempts[i] for i in idx], axis=0)
    return curve_from_counts(cov, int(np.sum(np.asarray(n_reference)[idx])), suc, att, thresholds)


@dataclass(frozen=True)
class PairedComparison:
    better: str
    worse: str
    auc_difference: float
    ci_low: float
    ci_high: float
    n_bootstrap: int

    @property
    def significant(self) -> bool:
        return self.ci_low > 0.0

    def to_dict(self) -> dict:
        return {
            "better": self.better,
            "worse": self.worse,
            "auc_difference": self.auc_difference,
            "ci95": [self.ci_low, self.ci_high],
            "n_bootstrap": self.n_bootstrap,
            "significant": self.significant,
        }


def bootstrap_auc_difference(
    a: VariantCounts,
    b: VariantCounts,
    n_reference: np.ndarray,
    thresholds,
    names: tuple[str, str],
    rng: np.random.Generator,
    n_bootstrap: int = 1000,
) -> PairedComparison:
    """Paired scene-level bootstrap of AUC(a) - AUC(b) with a percentile 95% interval."""
    n = len(a.covered)
    point = pooled_curve(a, n_reference, thresholds).auc - pooled_curve(b, n_reference, thresholds).auc
    diffs = np.empty(n_bootstrap)
    for k in range(n_bootstrap):
        idx = rng.integers(n, size=n)
        diffs[k] = pooled_curve(a, n_reference, thresholds, idx).auc - pooled_curve(b, n_reference, thresholds, idx).auc
    lo, hi = np.percentile(diffs, [2.5, 97.5])
    return PairedComparison(names[0], names[1], float(point), float(lo), float(hi), n_bootstrap)
