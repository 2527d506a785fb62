"""Held-out benchmark: run every method variant on the same scenes and grasps, pool, and compare."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .assets import asset_library
from .config import RunConfig
from .evaluation import (
    VariantCounts,
    bootstrap_auc_difference,
    covered_by_threshold,
    curve_from_counts,
    pooled_curve,
    success_flags,
    threshold_counts,
    topk_counts,
)
from .geometry import pairwise_grasp_distance
from .grasps import generate_reference_set, reference_positives
from .scene import PlacementError, Scene, canonical_json, crop_target, generate_scene, render_cloud
from .scoring import ScoringContext, make_scorer, sample_and_refine

log = logging.getLogger(__name__)

LABELINGS = ("cascaded", "single_stage")
COLLIDERS = {
    "none": "none",
    "voxel": "voxel_binary",
    "voxel_no_target": "voxel_binary_no_target",
    "soft": "soft_collision",
    "exact": "exact_binary",
}
SAMPLERS = ("surface_normal", "external")


class UnknownVariantError(ValueError):
    pass


def parse_variant(name: str) -> tuple[str, str]:
    """``"labeling/collider"``, e.g. ``"cascaded/soft"``."""
    labeling, sep, collider = name.partition("/")
    if not sep or labeling not in LABELINGS or collider not in COLLIDERS:
        raise UnknownVariantError(
            f"unknown variant {name!r}; expected <labeling>/<collider> with labeling in "
            f"{{{', '.join(LABELINGS)}}} and collider in {{{', '.join(COLLIDERS)}}}"
        )
    return labeling, collider


def thresholds_for(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.linspace(0.0, 1.0, n + 1), 12)


@dataclass
class SceneSetup:
    scene: Scene
    target: int
    X: object
    X_o: object
    occluded: set


def build_benchmark_scene(cfg: RunConfig, rng: np.random.Generator, library=None) -> SceneSetup:
    """Generate a cluttered scene, render it, and pick a sufficiently visible target."""
    sc = cfg.scene
    library = library or asset_library(sc.library_size, sc.library_seed)
    for _ in range(20):
        n_obj = int(rng.integers(sc.n_objects_min, sc.n_objects_max + 1))
        try:
            scene = generate_scene(
                library, n_obj, rng, sc.table_extent, sc.table_height, sc.max_attempts, tuple(sc.resolution)
            )
        except PlacementError:
            continue
        cloud, occ = render_cloud(scene, depth_noise=sc.depth_noise, rng=rng, return_occlusion=True)
        counts = {iid: int(np.sum(cloud.instance_ids == iid)) for iid in scene.instance_ids}
        eligible = [iid for iid in scene.instance_ids if counts[iid] >= sc.min_target_points]
        if not eligible:
            continue
        target = int(eligible[rng.integers(len(eligible))])
        if sc.flip_prob > 0 or sc.merge_prob > 0:
            from .scene import corrupt_segmentation

            protect = occ.partially_occluded - {target}
            cloud = corrupt_segmentation(cloud, sc.flip_prob, sc.merge_prob, rng, sc.boundary_band, protect)
            if not np.any(cloud.instance_ids == target):
                continue
        X, X_o = crop_target(cloud, target, sc.crop_box, sc.crop_noise, sc.crop_points, rng)
        if len(X_o) == 0:
            continue
        return SceneSetup(scene, target, X, X_o, occ.partially_occluded)
    raise PlacementError("could not build a benchmark scene with a visible target")


@dataclass
class SceneResult:
    """Per-threshold counts for every variant on one scene, plus summary numbers."""

    index: int
    summary: dict
    counts: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    n_reference: int
    seconds: float


def run_scene(
    index: int,
    seed: np.random.SeedSequence,
    cfg: RunConfig,
    variants: Sequence[str],
    sampler: str = "surface_normal",
    external_sampler: Callable | None = None,
) -> SceneResult:
    t0 = time.perf_counter()
    gen_ss, ref_ss, plan_ss = seed.spawn(3)
    gripper = cfg.gripper.build()
    setup = build_benchmark_scene(cfg, np.random.default_rng(gen_ss))
    scene, target, X, X_o = setup.scene, setup.target, setup.X, setup.X_o
    mu = cfg.cascade.friction_mu

    ref = generate_reference_set(scene, target, cfg.reference.n_candidates, np.random.default_rng(ref_ss), gripper, mu)
    positives = reference_positives(ref)

    ctx = ScoringContext(
        gripper, target, scene, mu, cfg.collision.soft, cfg.collision.voxel_size, cfg.collision.voxel_points_per_object
    )
    evaluator = make_scorer("antipodal", ctx)
    samp = None
    if sampler == "external":
        if external_sampler is None:
            raise UnknownVariantError("sampler 'external' needs a grasp provider")
        samp = external_sampler
    grasps = sample_and_refine(X_o, evaluator, cfg.cascade, np.random.default_rng(plan_ss), samp)
    poses = [g.pose for g in grasps]
    success = success_flags(poses, scene, target, gripper, mu)
    dist = pairwise_grasp_distance(poses, [g.pose for g in positives], gripper)

    quality = np.array([evaluator(p, X_o) for p in poses])
    single = None
    collider_cache: dict[str, np.ndarray] = {}

    def collider_values(name: str, need: np.ndarray) -> np.ndarray:
        key = COLLIDERS[name]
        if key not in collider_cache:
            collider_cache[key] = np.full(len(poses), np.nan)
        vals = collider_cache[key]
        todo = np.flatnonzero(need & np.isnan(vals))
        if len(todo):
            scorer = make_scorer(key, ctx)
            for i in todo:
                vals[i] = scorer(poses[i], X)
        return np.where(need, vals, 0.0)

    thresholds = thresholds_for(cfg.bench.threshold_step)
    counts, aucs = {}, {}
    for name in variants:
        labeling, collider = parse_variant(name)
        if labeling == "single_stage":
            if single is None:
                ss = make_scorer("single_stage", ctx)
                single = np.array([ss(p, X) for p in poses])
            base = single
        else:
            base = quality
        scores = base * (1.0 - collider_values(collider, base > 0.0))
        if cfg.bench.sweep == "topk":
            counts[name] = topk_counts(scores, success, dist, cfg.reference.coverage_radius)
        else:
            best = covered_by_threshold(scores, dist, cfg.reference.coverage_radius)
            counts[name] = threshold_counts(scores, success, best, thresholds)
        cov, suc, att = counts[name]
        aucs[name] = curve_from_counts(cov, len(positives), suc, att, thresholds).auc if positives else None

    summary = {
        "index": index,
        "n_objects": len(scene.placements),
        "target": target,
        "target_points": len(X_o),
        "partially_occluded": sorted(setup.occluded),
        "reference_candidates": len(ref),
        "reference_positives": len(positives),
        "grasps": len(poses),
        "oracle_successes": int(success.sum()),
        "auc": aucs,
    }
    return SceneResult(index, summary, counts, len(positives), time.perf_counter() - t0)


@dataclass
class BenchmarkReport:
    config: dict
    sampler: str
    variants: dict
    scenes: list
    comparisons: list
    timings: dict | None = None
    curves: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        out = {
            "sampler": self.sampler,
            "variants": self.variants,
            "comparisons": self.comparisons,
            "scenes": self.scenes,
            "config": self.config,
        }
        if self.timings is not None:
            out["timings"] = self.timings
        return out

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def auc(self, variant: str) -> float:
        return self.variants[variant]["auc"]

    def comparison(self, better: str, worse: str) -> dict:
        for c in self.comparisons:
            if c["better"] == better and c["worse"] == worse:
                return c
        raise KeyError((better, worse))

    def write(self, out_dir) -> list[Path]:
        """Report JSON, one CSV row per curve point, and the success-coverage figure."""
        from .plotting import plot_success_coverage

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        with open(out / "curves.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "coverage", "success_rate"])
            for name, v in self.variants.items():
                for c, s in v["points"]:
                    w.writerow([name, f"{c:.9g}", f"{s:.9g}"])
        plot_success_coverage(self.curves, out / "success_coverage.png")
        return [out / "report.json", out / "curves.csv", out / "success_coverage.png"]


def run_ablation(
    cfg: RunConfig,
    variants: Sequence[str] | None = None,
    n_scenes: int | None = None,
    seed: int | None = None,
    sampler: str = "surface_normal",
    external_sampler: Callable | None = None,
    comparisons: Sequence[tuple[str, str]] | None = None,
    record_timings: bool = False,
) -> BenchmarkReport:
    """Run all variants on the same held-out scenes; deterministic for a given seed and config."""
    variants = list(variants if variants is not None else cfg.bench.variants)
    for v in variants:
        parse_variant(v)
    if sampler not in SAMPLERS:
        raise UnknownVariantError(f"unknown sampler {sampler!r}; expected one of {', '.join(SAMPLERS)}")
    n_scenes = cfg.bench.n_scenes if n_scenes is None else n_scenes
    seed = cfg.seed if seed is None else seed
    comparisons = [tuple(c) for c in (comparisons if comparisons is not None else cfg.bench.comparisons)]
    comparisons = [c for c in comparisons if c[0] in variants and c[1] in variants]

    root = np.random.SeedSequence(seed)
    scene_seeds = root.spawn(n_scenes)
    boot_seed = root.spawn(1)[0]
    t0 = time.perf_counter()
    args = [(i, scene_seeds[i], cfg, variants, sampler, external_sampler) for i in range(n_scenes)]
    if cfg.bench.workers > 1 and external_sampler is None:
        with ProcessPoolExecutor(cfg.bench.workers) as pool:
            results = list(pool.map(run_scene, *zip(*args)))
    else:
        results = []
        for a in args:
            results.append(run_scene(*a))
            log.info("scene %d/%d done in %.1fs", a[0] + 1, n_scenes, results[-1].seconds)

    thresholds = thresholds_for(cfg.bench.threshold_step)
    if cfg.bench.sweep == "topk":
        # operating point k = best k grasps of every scene (scenes share n_samples)
        thresholds = np.arange(1, cfg.cascade.n_samples + 1)
    n_ref = np.array([r.n_reference for r in results])
    pooled: dict[str, VariantCounts] = {}
    out_variants, curves = {}, {}
    for name in variants:
        vc = VariantCounts()
        for r in results:
            vc.add(*r.counts[name])
        pooled[name] = vc
        curve = pooled_curve(vc, n_ref, thresholds)
        curves[name] = curve
        out_variants[name] = {"auc": curve.auc, "points": [list(p) for p in curve.points]}

    rng = np.random.default_rng(boot_seed)
    comp = [
        bootstrap_auc_difference(pooled[a], pooled[b], n_ref, thresholds, (a, b), rng, cfg.bench.n_bootstrap).to_dict()
        for a, b in comparisons
    ]
    timings = None
    if record_timings:
        secs = [r.seconds for r in results]
        timings = {"total_seconds": time.perf_counter() - t0, "mean_scene_seconds": float(np.mean(secs)) if secs else 0.0}
    return BenchmarkReport(cfg.to_dict(), sampler, out_variants, [r.summary for r in results], comp, timings, curves)

