"""Procedural object library: boxes, cylinders, bowls and bottles with analytic stable poses."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, TriMesh, box_mesh, load_obj, load_stl, revolve_profile

SEGMENTS = 16


@dataclass(frozen=True, eq=False)
class ObjectAsset:
    """A mesh in its own frame plus the resting orientations it can take on a table.

    Every stable pose puts the lowest vertex on ``z = 0`` and the footprint
    centre over the origin.
    """

    asset_id: str
    mesh: TriMesh
    stable_poses: tuple[tuple[Pose, float], ...]
    descriptor: dict

    def __post_init__(self):
        if not self.stable_poses:
            return
        w = np.array([p for _, p in self.stable_poses], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError(f"stable pose weights of {self.asset_id} must be non-negative and sum to 1")


def _rest(mesh: TriMesh, rot: Pose) -> Pose:
    """Complete ``rot`` with the translation that rests the rotated mesh on z = 0."""
    v = rot.apply(mesh.vertices)
    lo, hi = v.min(axis=0), v.max(axis=0)
    return Pose(rot.quat, [-0.5 * (lo[0] + hi[0]), -0.5 * (lo[1] + hi[1]), -lo[2]])


def _lying(mesh: TriMesh) -> Pose:
    """Axis horizontal, resting on a side facet of a revolved mesh."""
    spin = Pose.from_axis_angle([0, 0, 1], 1.5 * np.pi - np.pi / SEGMENTS)
    tilt = Pose.from_axis_angle([1, 0, 0], 0.5 * np.pi)
    return _rest(mesh, tilt @ spin)


def _asset(kind: str, desc: dict, mesh: TriMesh, poses: list[tuple[Pose, float]]) -> ObjectAsset:
    w = np.array([p for _, p in poses], dtype=float)
    w = w / w.sum()
    norm = tuple((pose, float(x)) for (pose, _), x in zip(poses, w))
    return ObjectAsset(asset_id(desc), mesh, norm, desc)


def asset_id(desc: dict) -> str:
    parts = [desc["kind"]]
    for key in sorted(k for k in desc if k != "kind"):
        val = desc[key]
        if isinstance(val, (list, tuple)):
            parts.append(key + "=" + "x".join(f"{v:.4g}" for v in val))
        else:
            parts.append(f"{key}={val:.4g}" if isinstance(val, float) else f"{key}={val}")
    return ":".join(parts)


def make_box(size) -> ObjectAsset:
    size = [float(s) for s in size]
    half = 0.5 * np.asarray(size)
    mesh = box_mesh(-half, half)
    ident = Pose()
    on_x = Pose.from_axis_angle([0, 1, 0], 0.5 * np.pi)
    on_y = Pose.from_axis_angle([1, 0, 0], 0.5 * np.pi)
    sx, sy, sz = size
    poses = [(_rest(mesh, ident), sx * sy), (_rest(mesh, on_x), sy * sz), (_rest(mesh, on_y), sx * sz)]
    return _asset("box", {"kind": "box", "size": size}, mesh, poses)


def make_cylinder(radius: float, height: float) -> ObjectAsset:
    mesh = revolve_profile([(0, 0), (radius, 0), (radius, height), (0, height)], SEGMENTS)
    upright = 0.6 if height < 3 * radius else 0.3
    poses = [(_rest(mesh, Pose()), upright), (_lying(mesh), 1.0 - upright)]
    return _asset("cylinder", {"kind": "cylinder", "radius": float(radius), "height": float(height)}, mesh, poses)


def make_bowl(radius: float, height: float, thickness: float = 0.006) -> ObjectAsset:
    base = 0.5 * radius
    profile = [
        (0, 0),
        (base, 0),
        (radius, height),
        (radius - thickness, height),
        (base - thickness * 0.5, thickness),
        (0, thickness),
    ]
    mesh = revolve_profile(profile, SEGMENTS)
    flipped = Pose.from_axis_angle([1, 0, 0], np.pi)
    poses = [(_rest(mesh, Pose()), 0.75), (_rest(mesh, flipped), 0.25)]
    desc = {"kind": "bowl", "radius": float(radius), "height": float(height), "thickness": float(thickness)}
    return _asset("bowl", desc, mesh, poses)


def make_bottle(radius: float, height: float, neck_radius: float, neck_height: float) -> ObjectAsset:
    shoulder = height - neck_height
    profile = [
        (0, 0),
        (radius, 0),
        (radius, 0.8 * shoulder),
        (neck_radius, shoulder),
        (neck_radius, height),
        (0, height),
    ]
    mesh = revolve_profile(profile, SEGMENTS)
    poses = [(_rest(mesh, Pose()), 0.6), (_lying(mesh), 0.4)]
    desc = {
        "kind": "bottle",
        "radius": float(radius),
        "height": float(height),
        "neck_radius": float(neck_radius),
        "neck_height": float(neck_height),
    }
    return _asset("bottle", desc, mesh, poses)


def make_hollow_box(size, wall: float) -> ObjectAsset:
    """Closed shell with an internal cavity (outer box plus inward-facing inner box)."""
    size = [float(s) for s in size]
    half = 0.5 * np.asarray(size)
    outer = box_mesh(-half, half)
    inner = box_mesh(-half + wall, half - wall)
    inner = TriMesh(inner.vertices, inner.triangles[:, ::-1])
    mesh = TriMesh.concatenate([outer, inner])
    return _asset("hollow_box", {"kind": "hollow_box", "size": size, "wall": float(wall)}, mesh, [(_rest(mesh, Pose()), 1.0)])


def make_mesh_asset(path: str) -> ObjectAsset:
    """External OBJ/STL mesh resting in its file orientation."""
    p = Path(path)
    mesh = load_stl(p) if p.suffix.lower() == ".stl" else load_obj(p)
    return _asset("mesh", {"kind": "mesh", "path": str(path)}, mesh, [(_rest(mesh, Pose()), 1.0)])


_FACTORIES = {
    "box": lambda d: make_box(d["size"]),
    "cylinder": lambda d: make_cylinder(d["radius"], d["height"]),
    "bowl": lambda d: make_bowl(d["radius"], d["height"], d.get("thickness", 0.006)),
    "bottle": lambda d: make_bottle(d["radius"], d["height"], d["neck_radius"], d["neck_height"]),
    "hollow_box": lambda d: make_hollow_box(d["size"], d["wall"]),
    "mesh": lambda d: make_mesh_asset(d["path"]),
}

_CACHE: dict[str, ObjectAsset] = {}


def asset_from_descriptor(desc: dict) -> ObjectAsset:
    kind = desc.get("kind")
    if kind not in _FACTORIES:
        raise ValueError(f"unknown asset kind {kind!r}")
    key = json.dumps(desc, sort_keys=True)
    if key not in _CACHE:
        _CACHE[key] = _FACTORIES[kind](desc)
    return _CACHE[key]


def random_asset(rng: np.random.Generator) -> ObjectAsset:
    """One procedurally sized asset from the four graspable categories."""
    kind = ["box", "cylinder", "bowl", "bottle"][rng.integers(4)]
    u = lambda lo, hi: round(float(rng.uniform(lo, hi)), 4)  # noqa: E731
    if kind == "box":
        dims = sorted([u(0.03, 0.06), u(0.04, 0.10), u(0.05, 0.14)])
        rng.shuffle(dims)
        return make_box(dims)
    if kind == "cylinder":
        return make_cylinder(u(0.018, 0.034), u(0.06, 0.15))
    if kind == "bowl":
        return make_bowl(u(0.05, 0.075), u(0.04, 0.06))
    return make_bottle(u(0.025, 0.034), u(0.14, 0.22), u(0.010, 0.014), u(0.04, 0.06))


def asset_library(n: int, seed: int) -> list[ObjectAsset]:
    """Deterministic library; the training and held-out splits just use different seeds."""
    rng = np.random.default_rng(seed)
    return [random_asset(rng) for _ in range(n)]


TRAIN_SEED = 1
HELDOUT_SEED = 2


def heldout_library(n: int = 15) -> list[ObjectAsset]:
    return asset_library(n, HELDOUT_SEED)
