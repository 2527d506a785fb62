"""Grasp candidates and their labeled sets (positives, negatives, hard negatives, free space)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .collision import collides_with_instance, exact_collision
from .geometry import GripperModel, PointCloud, Pose, frame_from_approach, random_rotation
from .quality import closing_region_mask, quality_oracle
from .scene import Scene

DEFAULT_STANDOFF = (0.07, 0.105)


class GraspSource(str, Enum):
    SURFACE_NORMAL = "surface_normal"
    EXTERNAL = "external"
    PERTURBED = "perturbed"
    FREE_SPACE = "free_space"


class Quality(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class GraspSet(str, Enum):
    G_PLUS = "G_plus"
    G_MINUS = "G_minus"
    G_HARD_NEGATIVE = "G_hard_negative"
    G_FREE = "G_free"


@dataclass(frozen=True)
class Grasp:
    pose: Pose
    source: GraspSource = GraspSource.EXTERNAL

    def __post_init__(self):
        object.__setattr__(self, "source", GraspSource(self.source))


@dataclass(frozen=True)
class GraspLabel:
    quality: Quality
    collision: bool
    set: GraspSet

    def __post_init__(self):
        object.__setattr__(self, "quality", Quality(self.quality))
        object.__setattr__(self, "set", GraspSet(self.set))
        if self.set is GraspSet.G_HARD_NEGATIVE and self.quality is not Quality.NEGATIVE:
            raise ValueError("hard negatives must have negative quality")
        if self.set is GraspSet.G_FREE and self.collision:
            raise ValueError("free-space grasps cannot be in collision")


def as_pose(g) -> Pose:
    return g.pose if isinstance(g, Grasp) else g


def surface_normal_sampler(
    object_cloud: PointCloud,
    k: int,
    standoff_range=DEFAULT_STANDOFF,
    rng: np.random.Generator | None = None,
) -> list[Grasp]:
    """Approach each randomly chosen surface point against its normal from a random standoff."""
    if k == 0:
        return []
    if len(object_cloud) == 0:
        raise ValueError("cannot sample grasps on an empty cloud")
    if not object_cloud.has_normals:
        raise ValueError("surface_normal_sampler needs normals")
    rng = rng or np.random.default_rng()
    idx = rng.integers(len(object_cloud), size=k)
    standoff = rng.uniform(standoff_range[0], standoff_range[1], size=k)
    roll = rng.uniform(0.0, 2.0 * np.pi, size=k)
    out = []
    for i, s, r in zip(idx, standoff, roll):
        n = object_cloud.normals[i] / np.linalg.norm(object_cloud.normals[i])
        rot = frame_from_approach(-n, r)
        out.append(Grasp(Pose.from_rotation(rot, object_cloud.points[i] + s * n), GraspSource.SURFACE_NORMAL))
    return out


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def perturb(g, max_translation: float, max_rotation: float, rng: np.random.Generator) -> Grasp:
    """Local-frame offset with magnitudes uniform in ``[0, max]`` and uniformly random directions."""
    pose = as_pose(g)
    t = _random_unit(rng) * rng.uniform(0.0, max_translation)
    angle = rng.uniform(0.0, max_rotation)
    delta = Pose.from_rotation(Rotation.from_rotvec(_random_unit(rng) * angle), t)
    return Grasp(pose @ delta, GraspSource.PERTURBED)


def label_grasp(g, scene: Scene, target: int, gripper: GripperModel, friction_mu: float = 0.5) -> GraspLabel:
    pose = as_pose(g)
    positive = quality_oracle(pose, scene, target, gripper, friction_mu)
    collision = exact_collision(gripper, pose, scene, with_distance=False).colliding
    quality = Quality.POSITIVE if positive else Quality.NEGATIVE
    return GraspLabel(quality, collision, GraspSet.G_PLUS if positive else GraspSet.G_MINUS)


def generate_reference_set(
    scene: Scene,
    target: int,
    n_candidates: int,
    rng: np.random.Generator,
    gripper: GripperModel,
    friction_mu: float = 0.5,
    standoff_range=DEFAULT_STANDOFF,
) -> list[tuple[Grasp, GraspLabel]]:
    """Sample on the target's full surface; quality from the isolated object, collision from the full scene."""
    samples = scene.placement(target).surface_samples
    cands = surface_normal_sampler(samples, n_candidates, standoff_range, rng)
    return [(g, label_grasp(g, scene, target, gripper, friction_mu)) for g in cands]


def reference_positives(reference: Sequence[tuple[Grasp, GraspLabel]]) -> list[Grasp]:
    """Grasps that succeed in the cluttered scene: good quality and collision-free."""
    return [g for g, lab in reference if lab.quality is Quality.POSITIVE and not lab.collision]


def is_too_far(g, object_cloud: PointCloud, gripper: GripperModel, far_threshold: float = 0.0) -> bool:
    """The closing region, grown by ``far_threshold``, holds no object point."""
    return not closing_region_mask(as_pose(g), object_cloud.points, gripper, far_threshold).any()


def hard_negatives(
    positives: Sequence,
    object_cloud: PointCloud,
    scene: Scene,
    target: int,
    gripper: GripperModel,
    far_threshold: float = 0.0,
    rng: np.random.Generator | None = None,
    max_translation: float = 0.02,
    max_rotation: float = np.radians(15.0),
    per_positive: int = 1,
) -> list[Grasp]:
    """Perturbed positives kept only when they hit the target mesh or hold nothing between the jaws."""
    rng = rng or np.random.default_rng()
    out = []
    for g in positives:
        for _ in range(per_positive):
            cand = perturb(g, max_translation, max_rotation, rng)
            if collides_with_instance(gripper, cand.pose, scene, target) or is_too_far(cand, object_cloud, gripper, far_threshold):
                out.append(cand)
    return out


class WorkspaceSaturatedError(RuntimeError):
    pass


def free_space_grasps(
    scene: Scene,
    n: int,
    rng: np.random.Generator,
    gripper: GripperModel,
    max_attempts: int | None = None,
) -> list[Grasp]:
    """Uniform poses in the workspace volume that touch neither objects nor table."""
    lo, hi = scene.workspace()
    budget = max_attempts if max_attempts is not None else 100 * max(n, 1)
    out: list[Grasp] = []
    tries = 0
    while len(out) < n:
        if tries >= budget:
            raise WorkspaceSaturatedError(f"found {len(out)} of {n} free grasps in {budget} attempts")
        tries += 1
        pose = Pose.from_rotation(random_rotation(rng), rng.uniform(lo, hi))
        if not exact_collision(gripper, pose, scene, with_distance=False).colliding:
            out.append(Grasp(pose, GraspSource.FREE_SPACE))
    return out
