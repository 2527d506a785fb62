"""Gripper collision checks: exact mesh oracle, voxel heuristic, and a soft point-cloud score."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bvh import (
    BVH,
    aabb_overlap,
    build_bvh,
    mesh_distance,
    points_inside,
    surfaces_intersect,
    surfaces_intersect_brute,
    tri_box_intersect,
)
from .geometry import GRIPPER_ID, TABLE_ID, GripperModel, PointCloud, Pose, farthest_point_sample
from .scene import Scene

TABLE_WITNESS = -1


@dataclass(frozen=True)
class CollisionResult:
    """Outcome of a gripper-vs-scene query.

    ``witness`` is ``(gripper_triangle, scene_triangle)``; the scene triangle is
    ``-1`` for table contact or pure containment, and ``instance`` names what was hit.
    """

    colliding: bool
    min_distance: float | None = None
    witness: tuple[int, int] | None = None
    instance: int | None = None


@lru_cache(maxsize=8)
def _gripper_bvh(gripper: GripperModel) -> BVH:
    return build_bvh(gripper.body_mesh)


def _body_points_inside(gripper: GripperModel, local_pts: np.ndarray) -> np.ndarray:
    """Points (gripper frame) inside any body box, boundary included."""
    inside = np.zeros(len(local_pts), dtype=bool)
    for lo, hi in gripper.body_boxes:
        inside |= np.all((local_pts >= lo) & (local_pts <= hi), axis=1)
    return inside


def _gripper_vs_placement(gripper, g, gbvh, placement, brute=False):
    """(gripper_tri, object_tri) witness, or None."""
    lo, hi = placement.bounds
    if not aabb_overlap(gbvh.lo[0], gbvh.hi[0], lo, hi):
        return None
    if brute:
        hit = surfaces_intersect_brute(gbvh.corners, placement.mesh.corners)
    else:
        hit = surfaces_intersect(gbvh, placement.bvh)
    if hit is not None:
        return hit
    # no crossing surfaces: either disjoint or one solid strictly inside the other
    gverts = g.apply(gripper.body_mesh.vertices)
    inside = points_inside(gverts, placement.mesh.corners)
    if inside.any():
        k = int(np.flatnonzero(inside)[0])
        return int(np.flatnonzero((gripper.body_mesh.triangles == k).any(axis=1))[0]), TABLE_WITNESS
    local = g.inverse().apply(placement.mesh.vertices)
    if _body_points_inside(gripper, local).any():
        return 0, TABLE_WITNESS
    return None


def exact_collision(
    gripper: GripperModel,
    g: Pose,
    scene: Scene,
    exclude_instance: int | None = None,
    with_distance: bool = True,
    brute_force: bool = False,
) -> CollisionResult:
    """Ground-truth collision of the gripper body at ``g`` with the full scene state.

    The table is a solid half-space below ``table_height``; ``exclude_instance=0``
    drops it. Exact contact counts as a collision. ``brute_force`` tests every
    triangle pair instead of traversing the trees (same kernel, same answer).
    """
    gbvh = _gripper_bvh(gripper).transformed(g)
    if exclude_instance != TABLE_ID:
        zs = gbvh.corners[..., 2]
        low = zs.min(axis=1) <= scene.table_height
        if low.any():
            return CollisionResult(True, None, (int(np.flatnonzero(low)[0]), TABLE_WITNESS), TABLE_ID)
    for p in scene.placements:
        if p.instance_id == exclude_instance:
            continue
        hit = _gripper_vs_placement(gripper, g, gbvh, p, brute=brute_force)
        if hit is not None:
            return CollisionResult(True, None, hit, p.instance_id)
    if not with_distance:
        return CollisionResult(False)
    return CollisionResult(False, _clearance(gbvh, scene, exclude_instance))


def _box_gap(lo_a, hi_a, lo_b, hi_b) -> float:
    gap = np.maximum(0.0, np.maximum(lo_a - hi_b, lo_b - hi_a))
    return float(np.linalg.norm(gap))


def _clearance(gbvh: BVH, scene: Scene, exclude_instance) -> float:
    best = np.inf
    if exclude_instance != TABLE_ID:
        best = float(gbvh.corners[..., 2].min() - scene.table_height)
    glo, ghi = gbvh.lo[0], gbvh.hi[0]
    order = sorted(
        (p for p in scene.placements if p.instance_id != exclude_instance),
        key=lambda p: _box_gap(glo, ghi, *p.bounds),
    )
    for p in order:
        if _box_gap(glo, ghi, *p.bounds) >= best:
            break
        best = min(best, mesh_distance(gbvh.corners, p.mesh.corners))
    return best


def collides_with_instance(gripper: GripperModel, g: Pose, scene: Scene, instance_id: int) -> bool:
    gbvh = _gripper_bvh(gripper).transformed(g)
    return _gripper_vs_placement(gripper, g, gbvh, scene.placement(instance_id)) is not None


# --------------------------------------------------------------------------- voxel heuristic


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupied cubes ``origin + (i + 0.5) * voxel_size`` for integer rows ``i`` of ``occupied``."""

    voxel_size: float
    occupied: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        occ = np.asarray(self.occupied, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "occupied", np.unique(occ, axis=0) if len(occ) else occ)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))

    def __len__(self) -> int:
        return len(self.occupied)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (self.occupied + 0.5) * self.voxel_size

    def index_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(points) - self.origin) / self.voxel_size).astype(np.int64)

    def to_json(self) -> str:
        return json.dumps(
            {"voxel_size": self.voxel_size, "origin": self.origin.tolist(), "occupied": self.occupied.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "VoxelGrid":
        d = json.loads(text)
        return cls(d["voxel_size"], np.array(d["occupied"], dtype=np.int64).reshape(-1, 3), d["origin"])


def voxelize_scene(
    cloud: PointCloud,
    points_per_object: int = 100,
    voxel_size: float = 0.02,
    exclude_target: bool = False,
    target_id: int | None = None,
    origin=(0.0, 0.0, 0.0),
) -> VoxelGrid:
    """Farthest-point subsample each object instance and mark the cells containing the samples.

    The table is never voxelized; gripper-indicator points are ignored.
    """
    cells = []
    scene_pts = cloud.source_flag == 0
    for iid in np.unique(cloud.instance_ids[scene_pts]):
        if iid <= TABLE_ID or (exclude_target and iid == target_id):
            continue
        pts = cloud.points[scene_pts & (cloud.instance_ids == iid)]
        k = min(points_per_object, len(pts))
        cells.append(pts[farthest_point_sample(pts, k, 0)])
    grid = VoxelGrid(voxel_size, np.zeros((0, 3), dtype=np.int64), origin)
    if not cells:
        return grid
    return VoxelGrid(voxel_size, grid.index_of(np.concatenate(cells)), origin)


def voxel_collision(gripper: GripperModel, g: Pose, grid: VoxelGrid) -> bool:
    """Gripper body mesh at ``g`` against every occupied cube (triangle/box overlap or containment)."""
    if len(grid) == 0:
        return False
    gbvh = _gripper_bvh(gripper).transformed(g)
    half = 0.5 * grid.voxel_size
    centers = grid.centers
    near = aabb_overlap(centers - half, centers + half, gbvh.lo[0], gbvh.hi[0])
    if not near.any():
        return False
    c = centers[near]
    tris = gbvh.corners
    ti = np.repeat(np.arange(len(tris)), len(c))
    bi = np.tile(np.arange(len(c)), len(tris))
    tlo, thi = tris.min(axis=1), tris.max(axis=1)
    keep = aabb_overlap(tlo[ti], thi[ti], c[bi] - half, c[bi] + half)
    ti, bi = ti[keep], bi[keep]
    if len(ti) and tri_box_intersect(tris[ti], c[bi], np.full((len(bi), 3), half)).any():
        return True
    # a cube swallowed whole by the body
    return bool(_body_points_inside(gripper, g.inverse().apply(c)).any())


# --------------------------------------------------------------------------- soft score


def _distance_to_boxes(local_pts: np.ndarray, boxes) -> np.ndarray:
    d = np.full(len(local_pts), np.inf)
    for lo, hi in boxes:
        gap = np.maximum(0.0, np.maximum(lo - local_pts, local_pts - hi))
        d = np.minimum(d, np.linalg.norm(gap, axis=1))
    return d


@dataclass(frozen=True)
class SoftCollisionParams:
    clearance: float = 0.01
    slope: float = 2.0
    midpoint: float = 1.0


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def soft_score_from_evidence(count: float, proximity: float, params: SoftCollisionParams = SoftCollisionParams()) -> float:
    """Logistic in ``count + proximity`` rescaled so zero evidence maps to exactly 0."""
    raw = count + proximity
    floor = _logistic(-params.slope * params.midpoint)
    val = (_logistic(params.slope * (raw - params.midpoint)) - floor) / (1.0 - floor)
    return float(np.clip(val, 0.0, 1.0))


def soft_collision_score(
    gripper: GripperModel,
    g: Pose,
    cloud: PointCloud,
    target_id: int | None = None,
    params: SoftCollisionParams = SoftCollisionParams(),
) -> float:
    """Collision probability surrogate from observed non-target points.

    Evidence is the number of points inside the swept gripper volume (body
    plus closing region) and how close the nearest point comes, measured in
    clearance radii. Points farther than the clearance radius contribute nothing.
    """
    mask = cloud.source_flag == 0
    if target_id is not None:
        mask &= cloud.instance_ids != target_id
    mask &= cloud.instance_ids != GRIPPER_ID
    pts = cloud.points[mask]
    if len(pts) == 0:
        return 0.0
    local = g.inverse().apply(pts)
    lo = np.min([b[0] for b in gripper.swept_boxes], axis=0) - params.clearance
    hi = np.max([b[1] for b in gripper.swept_boxes], axis=0) + params.clearance
    near = np.all((local >= lo) & (local <= hi), axis=1)
    if not near.any():
        return 0.0
    d = _distance_to_boxes(local[near], gripper.swept_boxes)
    dmin = float(d.min())
    if dmin >= params.clearance:
        return 0.0
    count = int(np.sum(d <= 0.0))
    return soft_score_from_evidence(count, 1.0 - dmin / params.clearance, params)
