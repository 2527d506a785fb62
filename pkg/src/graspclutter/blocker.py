"""Find the objects that keep a target from being grasped and plan their removal."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import GRIPPER_ID, TABLE_ID, PointCloud
from .grasps import as_pose
from .scene import TargetNotFoundError
from .scoring import PlanResult, ScoredGrasp, Scorer


def hallucinate_removal(cloud: PointCloud, j: int, table_height: float, instance_ids: Sequence[int] | None = None) -> PointCloud:
    """Pretend object ``j`` is gone: its points drop onto the table plane and become table points.

    Every other point is left untouched. ``instance_ids`` (the scene's objects)
    lets the caller reject ids that do not exist at all; a known object with no
    visible points yields an unchanged copy.
    """
    if j in (TABLE_ID, GRIPPER_ID):
        raise ValueError(f"instance {j} is not a removable object")
    if instance_ids is not None and j not in set(instance_ids):
        raise TargetNotFoundError(j)
    mask = cloud.instance_ids == j
    pts = cloud.points.copy()
    pts[mask, 2] = table_height
    ids = cloud.instance_ids.copy()
    ids[mask] = TABLE_ID
    normals = None
    if cloud.has_normals:
        normals = cloud.normals.copy()
        normals[mask] = (0.0, 0.0, 1.0)
    return PointCloud(pts, ids, cloud.source_flag, normals)


def blocking_score(j: int, grasps: Sequence, X: PointCloud, collider: Scorer, table_height: float) -> float:
    """Mean drop in collision score over ``grasps`` when ``j`` is hallucinated away (positive = j blocks)."""
    if len(grasps) == 0:
        raise ValueError("blocking_score needs at least one grasp")
    X_hat = hallucinate_removal(X, j, table_height)
    diffs = [collider(as_pose(g), X) - collider(as_pose(g), X_hat) for g in grasps]
    return float(np.mean(diffs))


@dataclass(frozen=True)
class BlockerRanking:
    entries: tuple[tuple[int, float], ...]
    target: int
    grasps: tuple = ()

    @property
    def top(self) -> int | None:
        return self.entries[0][0] if self.entries else None

    def to_list(self) -> list[dict]:
        return [{"instance": i, "alpha": a} for i, a in self.entries]


def rank_blockers(X: PointCloud, target: int, grasps: Sequence, collider: Scorer, table_height: float) -> BlockerRanking:
    """Score every visible non-target object; highest alpha first, ties to the lower id."""
    ids = sorted(int(i) for i in np.unique(X.instance_ids) if i > TABLE_ID and i != target)
    scored = [(j, blocking_score(j, grasps, X, collider, table_height)) for j in ids]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return BlockerRanking(tuple(scored), target, tuple(grasps))


@dataclass
class RemovalStep:
    instance: int
    alpha: float
    grasp: ScoredGrasp | None
    ranking: BlockerRanking


@dataclass
class RemovalPlan:
    target: int
    steps: list[RemovalStep] = field(default_factory=list)
    final: ScoredGrasp | None = None

    @property
    def removals(self) -> list[int]:
        return [s.instance for s in self.steps]

    @property
    def success(self) -> bool:
        return self.final is not None

    def to_dict(self) -> dict:
        def grasp_dict(sg: ScoredGrasp | None):
            if sg is None:
                return None
            q, t = sg.grasp.pose.as_list()
            return {"quaternion_wxyz": q, "translation_xyz": t, "quality": sg.quality, "collision": sg.collision, "score": sg.score}

        return {
            "target": self.target,
            "success": self.success,
            "removals": [
                {"instance": s.instance, "alpha": s.alpha, "grasp": grasp_dict(s.grasp), "ranking": s.ranking.to_list()}
                for s in self.steps
            ],
            "final_grasp": grasp_dict(self.final),
        }


class TargetBlockedError(RuntimeError):
    """Removal budget exhausted (or nothing left to remove) while the target is still blocked."""

    def __init__(self, message: str, plan: RemovalPlan):
        super().__init__(message)
        self.plan = plan


def plan_removal(
    X: PointCloud,
    target: int,
    pipeline: Callable[[PointCloud, int], PlanResult],
    collider: Scorer,
    max_removals: int,
    table_height: float,
    threshold: float = 0.5,
) -> RemovalPlan:
    """Remove the worst blocker, re-plan, and repeat until a target grasp scores ``threshold``.

    ``pipeline(cloud, instance)`` produces scored grasps for an instance;
    blocking scores are averaged over the target grasps whose object-centric
    quality passes ``threshold`` (all grasps with any quality if none do).
    """
    if not np.any(X.instance_ids == target):
        raise TargetNotFoundError(target)
    plan = RemovalPlan(target)
    cloud = X
    while True:
        result = pipeline(cloud, target)
        best = max(result.candidates, key=lambda s: s.score, default=None)
        if best is not None and best.score >= threshold:
            plan.final = result.best if result.best is not None else best
            return plan
        if len(plan.steps) >= max_removals:
            raise TargetBlockedError(f"target {target} still blocked after {len(plan.steps)} removal(s)", plan)
        good = [s.grasp for s in result.candidates if s.quality >= threshold]
        grasps = good or [s.grasp for s in result.candidates if s.quality > 0.0]
        if not grasps:
            raise TargetBlockedError(f"no viable grasp on target {target} to free up", plan)
        ranking = rank_blockers(cloud, target, grasps, collider, table_height)
        if not ranking.entries:
            raise TargetBlockedError(f"target {target} blocked but no other object is visible", plan)
        j, alpha = ranking.entries[0]
        removal = pipeline(cloud, j)
        plan.steps.append(RemovalStep(j, alpha, removal.best, ranking))
        cloud = hallucinate_removal(cloud, j, table_height)


def removal_pipeline(ctx_factory, config, rng_factory, evaluator: str = "antipodal", collider: str = "soft_collision"):
    """Wrap :func:`plan_grasps` as a ``pipeline(cloud, instance)`` callable for :func:`plan_removal`."""
    from .scoring import plan_grasps

    def run(cloud: PointCloud, instance: int) -> PlanResult:
        return plan_grasps(cloud, instance, ctx_factory(instance), config, evaluator, collider, rng_factory(instance))

    return run


def plan_scene_removal(X: PointCloud, target: int, scene, cfg, seed: int = 0) -> RemovalPlan:
    """:func:`plan_removal` with every setting taken from a run config.

    Each instance gets its own generator derived from ``seed`` so results do
    not depend on the order in which objects are planned for.
    """
    from dataclasses import replace

    from .scoring import ScoringContext, make_scorer

    gripper = cfg.gripper.build()
    cascade = replace(cfg.cascade, rank_by=cfg.blocker.rank_by, n_samples=cfg.blocker.n_grasps)

    def ctx(i: int) -> ScoringContext:
        return ScoringContext(
            gripper, i, scene, cascade.friction_mu, cfg.collision.soft, cfg.collision.voxel_size, cfg.collision.voxel_points_per_object
        )

    pipe = removal_pipeline(ctx, cascade, lambda i: np.random.default_rng(np.random.SeedSequence([seed, i])))
    collider = make_scorer("soft_collision", ctx(target))
    return plan_removal(X, target, pipe, collider, cfg.blocker.max_removals, scene.table_height, cfg.blocker.threshold)
