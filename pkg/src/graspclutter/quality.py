"""Geometric grasp quality from oriented points, and the analytic success oracle built on it."""

from __future__ import annotations

import numpy as np

from .collision import _body_points_inside, exact_collision
from .geometry import GripperModel, PointCloud, Pose
from .scene import Scene

CONTACT_BAND = 0.005
MIN_PATCH = 0.01


def _in_box(pts: np.ndarray, box, margin: float = 0.0) -> np.ndarray:
    lo, hi = box
    return np.all((pts >= lo - margin) & (pts <= hi + margin), axis=1)


def closing_region_mask(g: Pose, points: np.ndarray, gripper: GripperModel, margin: float = 0.0) -> np.ndarray:
    """Which world points fall inside the closing region (optionally grown by ``margin``)."""
    return _in_box(g.inverse().apply(points), gripper.closing_region, margin)


def _side_fraction(local_pts, local_nrm, sign: float, cos_cone: float, band: float, min_patch: float):
    """Fraction of the outermost contact band on one jaw whose normals sit in the friction cone.

    Returns None when no point of the band faces that jaw (side unobserved),
    and 0 when the facing points span less than ``min_patch`` across the
    finger face (a fingertip graze rather than a contact patch).
    """
    x = sign * local_pts[:, 0]
    zone = x >= x.max() - band
    facing = zone & (sign * local_nrm[:, 0] > 0.0)
    if not facing.any():
        return None
    yz = local_pts[facing, 1:]
    if np.linalg.norm(yz.max(axis=0) - yz.min(axis=0)) < min_patch:
        return 0.0
    return float(np.mean(sign * local_nrm[facing, 0] >= cos_cone))


def antipodal_score(
    g: Pose,
    object_cloud: PointCloud,
    gripper: GripperModel,
    friction_mu: float = 0.5,
    band: float = CONTACT_BAND,
    require_both_sides: bool = False,
    min_patch: float = MIN_PATCH,
) -> float:
    """Product of per-jaw friction-cone agreement at the points each jaw would touch first.

    Zero when the closing region holds no points or when any point sits inside
    the gripper body (grasp too deep / fingers through the object). Contacts
    must cover a patch of at least ``min_patch`` on each observed jaw. A jaw side
    with no outward-facing points is unobserved; by default it mirrors the
    observed side, while ``require_both_sides`` scores it as 0.
    """
    if not object_cloud.has_normals:
        raise ValueError("antipodal_score needs a cloud with normals")
    if len(object_cloud) == 0:
        return 0.0
    inv = g.inverse()
    local = inv.apply(object_cloud.points)
    in_region = _in_box(local, gripper.closing_region)
    if not in_region.any():
        return 0.0
    if _body_points_inside(gripper, local).any():
        return 0.0
    nrm = inv.rotate(object_cloud.normals[in_region])
    pts = local[in_region]
    cos_cone = float(np.cos(np.arctan(friction_mu)))
    f_pos = _side_fraction(pts, nrm, 1.0, cos_cone, band, min_patch)
    f_neg = _side_fraction(pts, nrm, -1.0, cos_cone, band, min_patch)
    if f_pos is None and f_neg is None:
        return 0.0
    if f_pos is None or f_neg is None:
        if require_both_sides:
            return 0.0
        f = f_pos if f_neg is None else f_neg
        return f * f
    return f_pos * f_neg


def success_oracle(
    g: Pose,
    scene: Scene,
    target: int,
    gripper: GripperModel,
    friction_mu: float = 0.5,
    threshold: float = 0.5,
) -> bool:
    """A grasp succeeds when the gripper touches nothing in the full scene and
    the closing jaws find antipodal contacts on the target's complete surface."""
    samples = scene.placement(target).surface_samples
    if exact_collision(gripper, g, scene, with_distance=False).colliding:
        return False
    return antipodal_score(g, samples, gripper, friction_mu, require_both_sides=True) > threshold


def quality_oracle(g: Pose, scene: Scene, target: int, gripper: GripperModel, friction_mu: float = 0.5, threshold: float = 0.5) -> bool:
    """Grasp quality on the isolated target (table kept, clutter removed)."""
    return success_oracle(g, scene.only(target), target, gripper, friction_mu, threshold)
