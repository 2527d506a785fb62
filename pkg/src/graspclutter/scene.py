"""Cluttered tabletop scenes: placement, single-view rendering, label corruption and crops."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .assets import ObjectAsset, asset_from_descriptor
from .bvh import BVH, build_bvh, points_inside, ray_cast_many, rays_hit_box, surfaces_intersect
from .geometry import TABLE_ID, PointCloud, Pose, TriMesh, farthest_point_sample, look_at


class TargetNotFoundError(KeyError):
    def __str__(self) -> str:
        return f"target not found: {self.args[0]}"


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera; pixel (u, v) looks along ((u - cx)/fx, (v - cy)/fy, 1) in the camera frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 16 or self.height < 16:
            raise ValueError("resolution must be at least 16x16")

    @classmethod
    def looking_at(cls, eye, target, width: int = 160, height: int = 120, fov_deg: float = 50.0) -> "CameraModel":
        f = 0.5 * width / np.tan(np.radians(0.5 * fov_deg))
        return cls(f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height, look_at(eye, target))

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """World-frame ray origins and unit directions in row-major pixel order."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        d = np.stack([(u.ravel() - self.cx) / self.fx, (v.ravel() - self.cy) / self.fy, np.ones(u.size)], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d = self.pose.rotate(d)
        return np.broadcast_to(self.pose.translation, d.shape).copy(), d

    def to_dict(self) -> dict:
        q, t = self.pose.as_list()
        return {
            "intrinsics": {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height},
            "extrinsic": {"quaternion_wxyz": q, "translation_xyz": t},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        k = d["intrinsics"]
        e = d["extrinsic"]
        pose = Pose(e["quaternion_wxyz"], e["translation_xyz"])
        return cls(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]), int(k["width"]), int(k["height"]), pose)


@dataclass(frozen=True, eq=False)
class Placement:
    instance_id: int
    asset: ObjectAsset
    pose: Pose

    @cached_property
    def mesh(self) -> TriMesh:
        return self.asset.mesh.transformed(self.pose)

    @cached_property
    def bvh(self) -> BVH:
        return build_bvh(self.mesh)

    @cached_property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mesh.bounds

    @cached_property
    def surface_samples(self) -> PointCloud:
        """Dense uniform surface sampling with exact face normals (full-state view of the object)."""
        rng = np.random.default_rng(self.instance_id)
        n = int(np.clip(self.mesh.areas.sum() / 2.5e-5, 800, 4000))
        pts, nrm, _ = self.mesh.sample_surface(n, rng)
        return PointCloud(pts, np.full(n, self.instance_id), normals=nrm)


@dataclass(frozen=True, eq=False)
class Scene:
    """Full scene state: table plane at ``table_height`` plus placed rigid objects."""

    placements: tuple[Placement, ...] = ()
    table_height: float = 0.0
    table_extent: tuple[float, float] = (0.25, 0.25)
    camera: CameraModel | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index.update({p.instance_id: p for p in self.placements})

    @property
    def instance_ids(self) -> list[int]:
        return [p.instance_id for p in self.placements]

    def placement(self, instance_id: int) -> Placement:
        try:
            return self._index[instance_id]
        except KeyError:
            raise TargetNotFoundError(instance_id) from None

    def next_instance_id(self) -> int:
        return max(self.instance_ids, default=0) + 1

    def with_placement(self, asset: ObjectAsset, pose: Pose, instance_id: int | None = None) -> "Scene":
        iid = self.next_instance_id() if instance_id is None else instance_id
        return Scene(self.placements + (Placement(iid, asset, pose),), self.table_height, self.table_extent, self.camera)

    def without(self, instance_id: int) -> "Scene":
        self.placement(instance_id)
        kept = tuple(p for p in self.placements if p.instance_id != instance_id)
        return Scene(kept, self.table_height, self.table_extent, self.camera)

    def only(self, instance_id: int) -> "Scene":
        return Scene((self.placement(instance_id),), self.table_height, self.table_extent, self.camera)

    def with_camera(self, camera: CameraModel) -> "Scene":
        return Scene(self.placements, self.table_height, self.table_extent, camera)

    def workspace(self, height: float = 0.35) -> tuple[np.ndarray, np.ndarray]:
        hx, hy = self.table_extent
        lo = np.array([-hx - 0.1, -hy - 0.1, self.table_height])
        hi = np.array([hx + 0.1, hy + 0.1, self.table_height + height])
        return lo, hi


def meshes_collide(a: Placement | tuple[TriMesh, BVH], b: Placement | tuple[TriMesh, BVH]) -> bool:
    """Solid intersection of two closed meshes (surface crossing or containment)."""
    ma, ba = (a.mesh, a.bvh) if isinstance(a, Placement) else a
    mb, bb = (b.mesh, b.bvh) if isinstance(b, Placement) else b
    lo_a, hi_a = ma.bounds
    lo_b, hi_b = mb.bounds
    if np.any(lo_a > hi_b) or np.any(lo_b > hi_a):
        return False
    if surfaces_intersect(ba, bb) is not None:
        return True
    return bool(points_inside(ma.vertices, mb.corners).any() or points_inside(mb.vertices, ma.corners).any())


# --------------------------------------------------------------------------- generation


def sample_stable_pose(asset: ObjectAsset, rng: np.random.Generator, table_extent=(0.0, 0.0), table_height: float = 0.0) -> Pose:
    """Stable pose drawn by weight, uniform yaw, uniform position over the table rectangle."""
    if not asset.stable_poses:
        raise ValueError(f"asset {asset.asset_id} has no stable poses")
    w = np.array([p for _, p in asset.stable_poses])
    k = int(rng.choice(len(w), p=w / w.sum()))
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    hx, hy = table_extent
    xy = rng.uniform([-hx, -hy], [hx, hy])
    spin = Pose.from_axis_angle([0, 0, 1], yaw, [xy[0], xy[1], table_height])
    return spin @ asset.stable_poses[k][0]


def place_with_rejection(scene: Scene, asset: ObjectAsset, max_attempts: int, rng: np.random.Generator) -> Scene:
    """Add ``asset`` at a stable pose that does not intersect anything already placed."""
    iid = scene.next_instance_id()
    for _ in range(max_attempts):
        pose = sample_stable_pose(asset, rng, scene.table_extent, scene.table_height)
        cand = Placement(iid, asset, pose)
        if cand.bounds[0][2] < scene.table_height - 1e-9:
            continue
        if not any(meshes_collide(cand, other) for other in scene.placements):
            return Scene(scene.placements + (cand,), scene.table_height, scene.table_extent, scene.camera)
    raise PlacementError(f"could not place {asset.asset_id} after {max_attempts} attempts")


def random_camera(rng: np.random.Generator, table_height: float = 0.0, width: int = 160, height: int = 120) -> CameraModel:
    azim = rng.uniform(0.0, 2.0 * np.pi)
    elev = np.radians(rng.uniform(35.0, 60.0))
    dist = rng.uniform(0.65, 0.8)
    eye = np.array([np.cos(azim) * np.cos(elev), np.sin(azim) * np.cos(elev), np.sin(elev)]) * dist
    eye[2] += table_height
    return CameraModel.looking_at(eye, [0.0, 0.0, table_height + 0.05], width, height)


def generate_scene(
    library: Sequence[ObjectAsset],
    n_objects: int,
    rng: np.random.Generator,
    table_extent=(0.15, 0.15),
    table_height: float = 0.0,
    max_attempts: int = 50,
    resolution=(160, 120),
) -> Scene:
    scene = Scene((), table_height, tuple(table_extent))
    tries = 0
    while len(scene.placements) < n_objects:
        asset = library[int(rng.integers(len(library)))]
        try:
            scene = place_with_rejection(scene, asset, max_attempts, rng)
        except PlacementError:
            tries += 1
            if tries > 4 * n_objects:
                raise
    return scene.with_camera(random_camera(rng, table_height, *resolution))


# --------------------------------------------------------------------------- rendering


@dataclass(frozen=True)
class Occlusion:
    """Per-instance pixel counts from a render: visible, and hit but hidden behind something nearer."""

    visible: dict
    hidden: dict

    @property
    def partially_occluded(self) -> set[int]:
        return {i for i, h in self.hidden.items() if h > 0 and self.visible.get(i, 0) > 0}


def render_cloud(
    scene: Scene,
    camera: CameraModel | None = None,
    depth_noise: float = 0.0,
    rng: np.random.Generator | None = None,
    return_occlusion: bool = False,
):
    """Ray-cast one ray per pixel; keep the nearest hit labeled with its instance (table = 0)."""
    camera = camera or scene.camera
    if camera is None:
        raise ValueError("scene has no camera")
    origins, dirs = camera.rays()
    n = len(dirs)
    best_t = np.full(n, np.inf)
    owner = np.full(n, -1, dtype=np.int64)
    normals = np.zeros((n, 3))

    # table plane
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = (scene.table_height - origins[:, 2]) / dirs[:, 2]
    on_table = np.isfinite(t_table) & (t_table > 0)
    best_t[on_table] = t_table[on_table]
    owner[on_table] = TABLE_ID
    normals[on_table] = [0.0, 0.0, 1.0 if camera.pose.translation[2] >= scene.table_height else -1.0]

    hit_counts = {}
    per_object = []
    for p in scene.placements:
        lo, hi = p.bounds
        cand = np.flatnonzero(rays_hit_box(origins, dirs, lo, hi))
        t, tri = ray_cast_many(p.mesh.corners, origins[cand], dirs[cand])
        found = np.isfinite(t)
        cand, t, tri = cand[found], t[found], tri[found]
        per_object.append((p.instance_id, cand))
        closer = t < best_t[cand]
        idx = cand[closer]
        best_t[idx] = t[closer]
        owner[idx] = p.instance_id
        normals[idx] = p.mesh.face_normals[tri[closer]]
        hit_counts[p.instance_id] = len(cand)

    keep = np.flatnonzero(owner >= 0)
    rng_t = best_t[keep]
    if depth_noise > 0:
        rng = rng or np.random.default_rng()
        rng_t = rng_t + rng.normal(0.0, depth_noise, len(rng_t))
    pts = origins[keep] + rng_t[:, None] * dirs[keep]
    cloud = PointCloud(pts, owner[keep], normals=normals[keep])
    if not return_occlusion:
        return cloud
    visible = {iid: int(np.sum(owner == iid)) for iid in scene.instance_ids}
    hidden = {iid: int(np.sum(owner[cand] != iid)) for iid, cand in per_object}
    return cloud, Occlusion(visible, hidden)


# --------------------------------------------------------------------------- label corruption and crops


def _boundary_neighbors(points: np.ndarray, labels: np.ndarray, band: float):
    """For each object point: label of the nearest point of another object within ``band`` (else -1)."""
    neighbor = np.full(len(points), -1, dtype=np.int64)
    objs = np.unique(labels[labels > TABLE_ID])
    for iid in objs:
        mine = np.flatnonzero(labels == iid)
        others = np.flatnonzero((labels > TABLE_ID) & (labels != iid))
        if len(others) == 0:
            continue
        tree = cKDTree(points[others])
        dist, j = tree.query(points[mine], distance_upper_bound=band)
        ok = np.isfinite(dist) & (dist < band)
        neighbor[mine[ok]] = labels[others[j[ok]]]
    return neighbor


def corrupt_segmentation(
    cloud: PointCloud,
    flip_prob: float,
    merge_prob: float,
    rng: np.random.Generator,
    band: float = 0.005,
    occluded: set[int] | None = None,
) -> PointCloud:
    """Imitate instance-segmentation errors; geometry is untouched.

    Partially occluded instances are merged wholesale into the neighbour they
    share the most boundary with (probability ``merge_prob`` each); afterwards
    boundary-band points adopt the nearest other label with probability
    ``flip_prob``. Without an ``occluded`` set every instance touching another
    counts as partially occluded.
    """
    labels = cloud.instance_ids.copy()
    if len(cloud) == 0:
        return cloud
    neighbor = _boundary_neighbors(cloud.points, labels, band)
    touching = sorted(set(labels[neighbor >= 0].tolist()))
    candidates = touching if occluded is None else sorted(i for i in occluded if i in touching)
    merge_draws = rng.random(len(candidates))
    original = cloud.instance_ids
    for iid, u in zip(candidates, merge_draws):
        if u >= merge_prob:
            continue
        nb = neighbor[(original == iid) & (neighbor >= 0)]
        vals, counts = np.unique(nb, return_counts=True)
        target = int(vals[np.argmax(counts)])
        labels[original == iid] = labels[original == target][0] if np.any(original == target) else target
    if flip_prob > 0:
        neighbor = _boundary_neighbors(cloud.points, labels, band)
        band_idx = np.flatnonzero(neighbor >= 0)
        flips = band_idx[rng.random(len(band_idx)) < flip_prob]
        labels[flips] = neighbor[flips]
    return cloud.with_ids(labels)


def crop_target(
    cloud: PointCloud,
    target: int,
    box_size: float = 0.40,
    center_noise: float = 0.02,
    n_points: int = 4096,
    rng: np.random.Generator | None = None,
) -> tuple[PointCloud, PointCloud]:
    """Cube crop around the (jittered) target centroid, resampled to exactly ``n_points``.

    Returns the scene crop and its target-labelled subset.
    """
    rng = rng or np.random.default_rng(0)
    mask = cloud.instance_ids == target
    if not mask.any():
        raise TargetNotFoundError(target)
    center = cloud.points[mask].mean(axis=0)
    if center_noise > 0:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        center = center + d * center_noise * rng.random() ** (1.0 / 3.0)
    inside = np.flatnonzero(np.all(np.abs(cloud.points - center) <= 0.5 * box_size, axis=1))
    if len(inside) >= n_points:
        seed = int(rng.integers(len(inside)))
        pick = inside[farthest_point_sample(cloud.points[inside], n_points, seed)]
    else:
        extra = rng.choice(inside, size=n_points - len(inside), replace=True) if len(inside) else np.zeros(0, dtype=np.int64)
        pick = np.concatenate([inside, extra])
    crop = cloud.subset(pick)
    return crop, crop.subset(crop.instance_ids == target)


# --------------------------------------------------------------------------- file formats


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(f"{float(obj):.9g}")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_round_floats(obj), indent=2) + "\n"


def scene_to_dict(scene: Scene) -> dict:
    out = {
        "table_height": scene.table_height,
        "table_extent": list(scene.table_extent),
        "camera": scene.camera.to_dict() if scene.camera is not None else None,
        "placements": [],
    }
    for p in scene.placements:
        q, t = p.pose.as_list()
        out["placements"].append({"instance_id": p.instance_id, "asset": p.asset.descriptor, "quaternion_wxyz": q, "translation_xyz": t})
    return out


def scene_from_dict(d: dict) -> Scene:
    placements = tuple(
        Placement(int(p["instance_id"]), asset_from_descriptor(p["asset"]), Pose(p["quaternion_wxyz"], p["translation_xyz"]))
        for p in d["placements"]
    )
    camera = CameraModel.from_dict(d["camera"]) if d.get("camera") else None
    return Scene(placements, float(d["table_height"]), tuple(d.get("table_extent", (0.25, 0.25))), camera)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(canonical_json(scene_to_dict(scene)))


def load_scene(path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))


def write_ply(cloud: PointCloud, path) -> None:
    """ASCII PLY with per-point instance id and gripper flag (and normals when present)."""
    has_n = cloud.has_normals
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}", "property float x", "property float y", "property float z"]
    if has_n:
        header += ["property float nx", "property float ny", "property float nz"]
    header += ["property int instance", "property uchar source", "end_header"]
    cols = [cloud.points] + ([cloud.normals] if has_n else [])
    floats = np.hstack(cols)
    lines = [
        " ".join(f"{v:.9g}" for v in row) + f" {int(i)} {int(s)}"
        for row, i, s in zip(floats, cloud.instance_ids, cloud.source_flag)
    ]
    Path(path).write_text("\n".join(header + lines) + "\n")


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    end = text.index("end_header")
    props = [ln.split()[-1] for ln in text[:end] if ln.startswith("property")]
    data = np.array([ln.split() for ln in text[end + 1 :] if ln.strip()], dtype=float).reshape(-1, len(props))
    col = {p: data[:, i] for i, p in enumerate(props)}
    pts = np.column_stack([col["x"], col["y"], col["z"]])
    normals = np.column_stack([col["nx"], col["ny"], col["nz"]]) if "nx" in col else None
    return PointCloud(pts, col["instance"].astype(np.int64), col["source"].astype(np.uint8), normals)
