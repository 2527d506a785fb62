"""Cascaded grasp scoring: object-centric quality times clutter-centric collision, with MH refinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .collision import SoftCollisionParams, exact_collision, soft_collision_score, voxel_collision, voxelize_scene
from .geometry import GRIPPER_ID, GripperModel, PointCloud, Pose
from .grasps import DEFAULT_STANDOFF, Grasp, GraspLabel, GraspSet, GraspSource, Quality, as_pose, surface_normal_sampler
from .quality import antipodal_score
from .scene import Scene


class Scorer(Protocol):
    def __call__(self, g: Pose, cloud: PointCloud) -> float: ...


@dataclass(frozen=True)
class ScoringContext:
    """Everything a scorer factory may need besides the (grasp, cloud) call arguments."""

    gripper: GripperModel
    target: int | None = None
    scene: Scene | None = None
    friction_mu: float = 0.5
    soft: SoftCollisionParams = SoftCollisionParams()
    voxel_size: float = 0.02
    voxel_points_per_object: int = 100


class AntipodalScorer:
    def __init__(self, ctx: ScoringContext):
        self.gripper, self.mu = ctx.gripper, ctx.friction_mu

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        return antipodal_score(g, cloud, self.gripper, self.mu)


class SingleStageScorer:
    """One score from the whole scene crop: contacts may come from any instance, no target mask."""

    def __init__(self, ctx: ScoringContext):
        self.gripper, self.mu = ctx.gripper, ctx.friction_mu

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        scene_pts = cloud.subset((cloud.source_flag == 0) & (cloud.instance_ids != GRIPPER_ID))
        return antipodal_score(g, scene_pts, self.gripper, self.mu)


class SoftCollisionScorer:
    def __init__(self, ctx: ScoringContext):
        self.gripper, self.target, self.params = ctx.gripper, ctx.target, ctx.soft

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        return soft_collision_score(self.gripper, g, cloud, self.target, self.params)


class VoxelScorer:
    """Binary voxel-heuristic collision; the grid is built once per cloud."""

    def __init__(self, ctx: ScoringContext, exclude_target: bool = False):
        self.ctx, self.exclude_target = ctx, exclude_target
        self._cache: tuple[int, object] | None = None

    def grid(self, cloud: PointCloud):
        if self._cache is None or self._cache[0] != id(cloud):
            grid = voxelize_scene(
                cloud,
                self.ctx.voxel_points_per_object,
                self.ctx.voxel_size,
                exclude_target=self.exclude_target,
                target_id=self.ctx.target,
            )
            self._cache = (id(cloud), grid, cloud)
        return self._cache[1]

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        return float(voxel_collision(self.ctx.gripper, g, self.grid(cloud)))


class ExactScorer:
    """Binary full-state collision; ignores the observation entirely."""

    def __init__(self, ctx: ScoringContext):
        if ctx.scene is None:
            raise ValueError("exact_binary needs the full scene state")
        self.gripper, self.scene = ctx.gripper, ctx.scene

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        return float(exact_collision(self.gripper, g, self.scene, with_distance=False).colliding)


class NullScorer:
    def __init__(self, ctx: ScoringContext | None = None):
        pass

    def __call__(self, g: Pose, cloud: PointCloud) -> float:
        return 0.0


SCORERS: dict[str, Callable[[ScoringContext], Scorer]] = {
    "antipodal": AntipodalScorer,
    "single_stage": SingleStageScorer,
    "soft_collision": SoftCollisionScorer,
    "voxel_binary": VoxelScorer,
    "voxel_binary_no_target": lambda ctx: VoxelScorer(ctx, exclude_target=True),
    "exact_binary": ExactScorer,
    "none": NullScorer,
}


def make_scorer(name: str, ctx: ScoringContext) -> Scorer:
    try:
        factory = SCORERS[name]
    except KeyError:
        raise ValueError(f"unknown scorer {name!r}; known: {', '.join(sorted(SCORERS))}") from None
    return factory(ctx)


def register_scorer(name: str, factory: Callable[[ScoringContext], Scorer]) -> None:
    SCORERS[name] = factory


def cascade_score(g: Pose, X_o: PointCloud, X: PointCloud, evaluator: Scorer, collider: Scorer) -> float:
    return evaluator(g, X_o) * (1.0 - collider(g, X))


# --------------------------------------------------------------------------- refinement


def mh_refine(
    g0: Pose,
    score: Callable[[Pose], float],
    iterations: int,
    translation_step: float,
    rotation_step: float,
    rng: np.random.Generator,
) -> list[Pose]:
    """Metropolis-Hastings chain over poses with a symmetric box proposal in the gripper frame.

    A proposal is accepted with probability ``min(1, s'/s)``; from a zero-score
    pose any positive proposal is accepted. Each step draws the same number of
    random values whether or not it is accepted.
    """
    chain = [g0]
    cur, s = g0, float(score(g0))
    for _ in range(iterations):
        dt = rng.uniform(-translation_step, translation_step, 3)
        dr = rng.uniform(-rotation_step, rotation_step, 3)
        u = rng.random()
        prop = cur @ Pose.from_rotation(Rotation.from_rotvec(dr), dt)
        s_new = float(score(prop))
        if s > 0.0:
            accept = u * s < s_new
        else:
            accept = s_new > 0.0
        if accept:
            cur, s = prop, s_new
        chain.append(cur)
    return chain


# --------------------------------------------------------------------------- filtering


RANKINGS = ("cascade", "evaluator", "robust")


@dataclass(frozen=True)
class CascadeConfig:
    evaluator_threshold: float = 0.5
    collision_threshold: float = 0.5
    mh_iterations: int = 20
    mh_translation_step: float = 0.01
    mh_rotation_step: float = float(np.radians(5.0))
    n_samples: int = 200
    rank_by: str = "cascade"
    friction_mu: float = 0.5
    standoff_range: tuple[float, float] = DEFAULT_STANDOFF
    robust_translation: float = 0.01
    robust_rotation: float = float(np.radians(10.0))

    def __post_init__(self):
        for name in ("evaluator_threshold", "collision_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.mh_translation_step <= 0 or self.mh_rotation_step <= 0:
            raise ValueError("MH steps must be positive")
        if self.mh_iterations < 0 or self.n_samples < 0:
            raise ValueError("counts must be non-negative")
        if self.rank_by not in RANKINGS:
            raise ValueError(f"rank_by must be one of {', '.join(RANKINGS)}, got {self.rank_by!r}")
        if self.robust_translation < 0 or self.robust_rotation < 0:
            raise ValueError("robust offsets must be non-negative")


@dataclass(frozen=True)
class ScoredGrasp:
    grasp: Grasp
    quality: float
    collision: float = 0.0

    @property
    def score(self) -> float:
        return self.quality * (1.0 - self.collision)


def _as_scored(item) -> ScoredGrasp:
    if isinstance(item, ScoredGrasp):
        return item
    g, p = item
    return ScoredGrasp(g if isinstance(g, Grasp) else Grasp(g), float(p), 0.0)


def filter_and_rank(grasps: Sequence, config: CascadeConfig = CascadeConfig()) -> list[ScoredGrasp]:
    """Keep grasps passing both thresholds, best first; equal scores keep input order.

    ``rank_by="robust"`` needs the scorers and is applied by :func:`plan_grasps`;
    here it falls back to the cascade score.
    Items are ``ScoredGrasp`` or ``(grasp, probability)`` pairs; a bare
    probability is treated as the evaluator score of a collision-free grasp.
    """
    scored = [_as_scored(x) for x in grasps]
    kept = [
        (i, s)
        for i, s in enumerate(scored)
        if s.quality >= config.evaluator_threshold and s.collision <= config.collision_threshold
    ]
    key = (lambda it: (-it[1].quality, it[0])) if config.rank_by == "evaluator" else (lambda it: (-it[1].score, it[0]))
    return [s for _, s in sorted(kept, key=key)]


def single_stage_label(g, quality, collides: bool) -> GraspLabel:
    """Positive only for good grasps that are also collision-free."""
    positive = Quality(quality) is Quality.POSITIVE and not collides
    return GraspLabel(
        Quality.POSITIVE if positive else Quality.NEGATIVE,
        bool(collides),
        GraspSet.G_PLUS if positive else GraspSet.G_MINUS,
    )


# --------------------------------------------------------------------------- pipeline


@dataclass
class PlanResult:
    """All refined candidates with their scores, and the filtered ranking."""

    candidates: list[ScoredGrasp] = field(default_factory=list)
    ranked: list[ScoredGrasp] = field(default_factory=list)

    @property
    def best(self) -> ScoredGrasp | None:
        return self.ranked[0] if self.ranked else None


def sample_and_refine(
    X_o: PointCloud,
    evaluator: Scorer,
    config: CascadeConfig,
    rng: np.random.Generator,
    sampler: Callable[[PointCloud, int, np.random.Generator], Sequence] | None = None,
) -> list[Grasp]:
    """Draw ``n_samples`` grasps on the object crop and move each along its own MH chain on the evaluator."""
    if sampler is None:
        seeds = surface_normal_sampler(X_o, config.n_samples, config.standoff_range, rng)
    else:
        seeds = [g if isinstance(g, Grasp) else Grasp(g) for g in sampler(X_o, config.n_samples, rng)]
    out = []
    for g in seeds:
        chain = mh_refine(
            g.pose,
            lambda p: evaluator(p, X_o),
            config.mh_iterations,
            config.mh_translation_step,
            config.mh_rotation_step,
            rng,
        )
        out.append(Grasp(chain[-1], g.source))
    return out


def score_grasps(grasps: Sequence, X_o: PointCloud, X: PointCloud, evaluator: Scorer, collider: Scorer) -> list[ScoredGrasp]:
    out = []
    for g in grasps:
        pose = as_pose(g)
        q = evaluator(pose, X_o)
        # a zero-quality grasp scores zero whatever the collider says
        c = collider(pose, X) if q > 0.0 else 0.0
        out.append(ScoredGrasp(g if isinstance(g, Grasp) else Grasp(pose, GraspSource.EXTERNAL), q, c))
    return out


def neighborhood_offsets(translation: float, rotation: float) -> list[Pose]:
    """Twelve local-frame offsets: plus and minus ``translation`` and ``rotation`` along each axis."""
    out = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            v = np.zeros(3)
            v[axis] = sign
            out.append(Pose.from_translation(v * translation))
            out.append(Pose.from_rotation(Rotation.from_rotvec(v * rotation), np.zeros(3)))
    return out


def neighborhood_score(g: Pose, X_o: PointCloud, X: PointCloud, evaluator: Scorer, collider: Scorer, offsets) -> float:
    """Mean cascade score over perturbed copies of ``g``; high when small pose errors keep the grasp good."""
    vals = []
    for d in offsets:
        p = g @ d
        q = evaluator(p, X_o)
        vals.append(q * (1.0 - collider(p, X)) if q > 0.0 else 0.0)
    return float(np.mean(vals))


def rank_robust(ranked: Sequence[ScoredGrasp], X_o, X, evaluator: Scorer, collider: Scorer, config: CascadeConfig):
    """Reorder kept grasps by neighborhood score, then cascade score, then input order."""
    offsets = neighborhood_offsets(config.robust_translation, config.robust_rotation)
    rob = [neighborhood_score(s.grasp.pose, X_o, X, evaluator, collider, offsets) for s in ranked]
    order = sorted(range(len(ranked)), key=lambda i: (-rob[i], -ranked[i].score, i))
    return [ranked[i] for i in order]


def plan_grasps(
    X: PointCloud,
    target: int,
    ctx: ScoringContext,
    config: CascadeConfig = CascadeConfig(),
    evaluator: str = "antipodal",
    collider: str = "soft_collision",
    rng: np.random.Generator | None = None,
) -> PlanResult:
    """Sample, refine, score and rank grasps on ``target`` in the scene crop ``X``."""
    rng = rng or np.random.default_rng(0)
    X_o = X.select_instance(target)
    if len(X_o) == 0:
        return PlanResult()
    ev = make_scorer(evaluator, ctx)
    col = make_scorer(collider, ctx)
    grasps = sample_and_refine(X_o, ev, config, rng)
    scored = score_grasps(grasps, X_o, X, ev, col)
    ranked = filter_and_rank(scored, config)
    if config.rank_by == "robust":
        ranked = rank_robust(ranked, X_o, X, ev, col, config)
    return PlanResult(scored, ranked)
