"""Rigid transforms, the parallel-jaw gripper model, point clouds and meshes.

Conventions used throughout the package:

* quaternions are stored ``wxyz`` and kept in the ``w >= 0`` hemisphere;
* a :class:`Pose` maps points from its local frame into the parent frame;
* the gripper frame has its origin at the wrist, the approach direction
  along ``+z`` and the fingers closing along ``x``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


def _as_quat_wxyz(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError(f"invalid quaternion {q!r}")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform stored as a unit quaternion (wxyz) and a translation in meters."""

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("pose translation must be finite")
        object.__setattr__(self, "quat", _as_quat_wxyz(self.quat))
        object.__setattr__(self, "translation", t)
        self.quat.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        xyzw = Rotation.from_matrix(m[:3, :3]).as_quat()
        return cls(np.roll(xyzw, 1), m[:3, 3])

    @classmethod
    def from_rotation(cls, rot, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Build from a 3x3 matrix or a scipy ``Rotation``."""
        if not isinstance(rot, Rotation):
            rot = Rotation.from_matrix(np.asarray(rot, dtype=float))
        return cls(np.roll(rot.as_quat(), 1), translation)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        return cls(np.r_[np.cos(half), np.sin(half) * axis], translation)

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(translation=t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def approach(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def closing_axis(self) -> np.ndarray:
        return self.rotation[:, 0]

    def inverse(self) -> "Pose":
        qi = self.quat * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose(qi, -quat_to_matrix(qi) @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        same_rot = np.allclose(self.rotation, other.rotation, atol=atol)
        return bool(same_rot and np.allclose(self.translation, other.translation, atol=atol))

    def as_list(self) -> tuple[list[float], list[float]]:
        return [float(v) for v in self.quat], [float(v) for v in self.translation]

    def __repr__(self) -> str:
        q = np.array2string(self.quat, precision=4)
        t = np.array2string(self.translation, precision=4)
        return f"Pose(quat={q}, translation={t})"


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a ∘ b``: apply ``b`` first, then ``a``."""
    q = quat_multiply(a.quat, b.quat)
    return Pose(q, a.rotation @ b.translation + a.translation)


def random_rotation(rng: np.random.Generator) -> Rotation:
    return Rotation.random(random_state=rng)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose with optical axis +z pointing at ``target`` (x right, y down)."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose.from_rotation(np.column_stack([x, y, z]), eye)


def frame_from_approach(approach, roll: float) -> np.ndarray:
    """Rotation whose z column is ``approach``; ``roll`` spins the closing axis about it."""
    a = np.asarray(approach, dtype=float)
    a = a / np.linalg.norm(a)
    ref = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x0 = ref - a * (ref @ a)
    x0 /= np.linalg.norm(x0)
    y0 = np.cross(a, x0)
    x = np.cos(roll) * x0 + np.sin(roll) * y0
    y = np.cross(a, x)
    return np.column_stack([x, y, a])


# --------------------------------------------------------------------------- meshes


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    @property
    def face_normals(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def normalized(self, min_area: float = 1e-14) -> "TriMesh":
        """Drop degenerate triangles and unreferenced vertices."""
        keep = self.areas > min_area
        tris = self.triangles[keep]
        used, inverse = np.unique(tris.ravel(), return_inverse=True)
        return TriMesh(self.vertices[used], inverse.reshape(-1, 3))

    def transformed(self, pose: Pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles)

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two triangles with opposite orientation."""
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        if len(np.unique(directed, axis=0)) != len(directed):
            return False
        fwd = {tuple(e) for e in directed.tolist()}
        return all((b, a) in fwd for a, b in fwd)

    def volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def sample_surface(self, n: int, rng: np.random.Generator):
        """Area-weighted uniform samples: (points, normals, triangle index)."""
        areas = self.areas
        tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
        u, v = rng.random(n), rng.random(n)
        flip = u + v > 1.0
        u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
        c = self.corners[tri]
        pts = c[:, 0] + u[:, None] * (c[:, 1] - c[:, 0]) + v[:, None] * (c[:, 2] - c[:, 0])
        return pts, self.face_normals[tri], tri

    @staticmethod
    def concatenate(meshes: Iterable["TriMesh"]) -> "TriMesh":
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        return TriMesh(np.concatenate(verts), np.concatenate(tris))


def box_mesh(lo, hi) -> TriMesh:
    """Axis-aligned box with outward-facing (counter-clockwise) triangles."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    v = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)])
    faces = [(0, 2, 6, 4), (1, 5, 7, 3), (0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6)]
    tris = []
    for a, b, c, d in faces:
        tris += [(a, b, c), (a, c, d)]
    mesh = TriMesh(v, tris)
    return _orient_outward(mesh)


def _orient_outward(mesh: TriMesh) -> TriMesh:
    """Flip triangles of a convex mesh whose normal points toward the centroid."""
    centroid = mesh.vertices.mean(axis=0)
    c = mesh.corners
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    inward = np.einsum("ij,ij->i", n, c.mean(axis=1) - centroid) < 0
    tris = mesh.triangles.copy()
    tris[inward] = tris[inward][:, ::-1]
    return TriMesh(mesh.vertices, tris)


def revolve_profile(profile: Sequence[tuple[float, float]], segments: int = 16) -> TriMesh:
    """Closed surface of revolution about +z.

    ``profile`` is a polyline of (radius, z) pairs that starts and ends on the
    axis (radius 0) and runs counter-clockwise in the (r, z) half-plane, so the
    resulting triangles face outward.
    """
    prof = np.asarray(profile, dtype=float)
    if prof[0, 0] != 0.0 or prof[-1, 0] != 0.0:
        raise ValueError("profile must start and end on the axis")
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ca, sa = np.cos(ang), np.sin(ang)
    verts = [np.array([0.0, 0.0, prof[0, 1]])]
    ring_index = []
    for r, z in prof[1:-1]:
        ring_index.append(len(verts))
        verts.extend(np.column_stack([r * ca, r * sa, np.full(segments, z)]))
    top = len(verts)
    verts.append(np.array([0.0, 0.0, prof[-1, 1]]))
    tris = []
    first = ring_index[0]
    for s in range(segments):
        tris.append((0, first + (s + 1) % segments, first + s))
    for a, b in zip(ring_index[:-1], ring_index[1:]):
        for s in range(segments):
            s1 = (s + 1) % segments
            tris.append((a + s, a + s1, b + s1))
            tris.append((a + s, b + s1, b + s))
    last = ring_index[-1]
    for s in range(segments):
        tris.append((top, last + s, last + (s + 1) % segments))
    mesh = TriMesh(np.array(verts), tris).normalized()
    if mesh.volume() < 0:
        mesh = TriMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def load_obj(path) -> TriMesh:
    """Read vertices and faces from an OBJ file; polygons are fan-triangulated."""
    verts, tris = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
    return TriMesh(np.array(verts, dtype=float), np.array(tris, dtype=np.int64)).normalized()


def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_stl(path) -> TriMesh:
    """Binary STL reader; coincident vertices are welded."""
    data = Path(path).read_bytes()
    (count,) = struct.unpack_from("<I", data, 80)
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    facets = np.frombuffer(data, dtype=rec, count=count, offset=84)
    corners = facets["v"].reshape(-1, 3).astype(float)
    verts, inverse = np.unique(corners, axis=0, return_inverse=True)
    return TriMesh(verts, inverse.reshape(-1, 3)).normalized()


def save_stl(mesh: TriMesh, path) -> None:
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    out = np.zeros(len(mesh.triangles), dtype=rec)
    out["n"] = mesh.face_normals
    out["v"] = mesh.corners
    Path(path).write_bytes(b"\0" * 80 + struct.pack("<I", len(out)) + out.tobytes())


# --------------------------------------------------------------------------- gripper


@dataclass(frozen=True, eq=False)
class GripperModel:
    """Parallel-jaw gripper at a fixed opening.

    ``body_boxes`` are the axis-aligned boxes (gripper frame) whose union is
    ``body_mesh``; they make point-in-body queries cheap.
    """

    control_points: np.ndarray
    body_mesh: TriMesh
    jaw_width: float
    closing_region: tuple[np.ndarray, np.ndarray]
    body_boxes: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def grasp_depth(self) -> float:
        """Distance from the wrist to the middle of the closing region along the approach."""
        lo, hi = self.closing_region
        return float(0.5 * (lo[2] + hi[2]))

    @property
    def swept_boxes(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return self.body_boxes + (self.closing_region,)


def make_gripper(
    jaw_width: float = 0.08,
    finger_length: float = 0.0475,
    finger_thickness: float = 0.01,
    depth: float = 0.02,
    palm_height: float = 0.02,
    stem_length: float = 0.045,
) -> GripperModel:
    """Franka-like gripper: stem, palm and two fingers, all boxes.

    The finger inner faces sit at ``x = ±jaw_width/2``.
    """
    hw, hd = 0.5 * jaw_width, 0.5 * depth
    palm_lo_z, palm_hi_z = stem_length, stem_length + palm_height
    tip_z = palm_hi_z + finger_length
    boxes = (
        (np.array([-0.01, -0.01, 0.0]), np.array([0.01, 0.01, palm_lo_z])),
        (np.array([-hw - finger_thickness, -hd, palm_lo_z]), np.array([hw + finger_thickness, hd, palm_hi_z])),
        (np.array([hw, -hd, palm_hi_z]), np.array([hw + finger_thickness, hd, tip_z])),
        (np.array([-hw - finger_thickness, -hd, palm_hi_z]), np.array([-hw, hd, tip_z])),
    )
    body = TriMesh.concatenate(box_mesh(lo, hi) for lo, hi in boxes)
    region = (np.array([-hw, -hd, palm_hi_z]), np.array([hw, hd, tip_z]))
    mid_z = 0.5 * (palm_hi_z + tip_z)
    cps = np.array(
        [
            [0.0, 0.0, 0.0],
            [hw, 0.0, palm_hi_z],
            [-hw, 0.0, palm_hi_z],
            [hw, 0.0, mid_z],
            [-hw, 0.0, mid_z],
            [hw, 0.0, tip_z],
            [-hw, 0.0, tip_z],
        ]
    )
    cps.setflags(write=False)
    return GripperModel(cps, body, float(jaw_width), region, boxes)


def control_points(g: Pose, gripper: GripperModel) -> np.ndarray:
    return g.apply(gripper.control_points)


def stacked_control_points(poses: Sequence[Pose], gripper: GripperModel) -> np.ndarray:
    """Control points for many poses, shape (N, n_points, 3)."""
    if len(poses) == 0:
        return np.zeros((0,) + gripper.control_points.shape)
    rots = np.stack([p.rotation for p in poses])
    trans = np.stack([p.translation for p in poses])
    return np.einsum("nij,pj->npi", rots, gripper.control_points) + trans[:, None, :]


def grasp_distance(g1: Pose, g2: Pose, gripper: GripperModel) -> float:
    """Mean Euclidean distance between corresponding transformed control points."""
    d = control_points(g1, gripper) - control_points(g2, gripper)
    return float(np.linalg.norm(d, axis=1).mean())


def pairwise_grasp_distance(a: Sequence[Pose], b: Sequence[Pose], gripper: GripperModel) -> np.ndarray:
    ca, cb = stacked_control_points(a, gripper), stacked_control_points(b, gripper)
    if len(ca) == 0 or len(cb) == 0:
        return np.zeros((len(ca), len(cb)))
    d = np.linalg.norm(ca[:, None] - cb[None, :], axis=-1)
    return d.mean(axis=-1)


# --------------------------------------------------------------------------- point clouds

TABLE_ID = 0
GRIPPER_ID = -1


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points with per-point instance label (0 = table) and gripper indicator flag."""

    points: np.ndarray
    instance_ids: np.ndarray
    source_flag: np.ndarray | None = None
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        ids = np.asarray(self.instance_ids, dtype=np.int64).reshape(-1)
        flag = np.zeros(len(pts), dtype=np.uint8) if self.source_flag is None else np.asarray(self.source_flag, dtype=np.uint8).reshape(-1)
        if len(ids) != len(pts) or len(flag) != len(pts):
            raise ValueError("point cloud arrays must have equal length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "source_flag", flag)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError("normals must match points")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def instances(self) -> np.ndarray:
        return np.unique(self.instance_ids)

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.points[index],
            self.instance_ids[index],
            self.source_flag[index],
            None if self.normals is None else self.normals[index],
        )

    def select_instance(self, instance_id: int) -> "PointCloud":
        return self.subset(self.instance_ids == instance_id)

    def with_ids(self, ids) -> "PointCloud":
        return PointCloud(self.points, ids, self.source_flag, self.normals)

    def transformed(self, pose: Pose) -> "PointCloud":
        normals = None if self.normals is None else pose.rotate(self.normals)
        return PointCloud(pose.apply(self.points), self.instance_ids, self.source_flag, normals)

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        with_normals = all(c.has_normals for c in clouds)
        return PointCloud(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.instance_ids for c in clouds]),
            np.concatenate([c.source_flag for c in clouds]),
            np.concatenate([c.normals for c in clouds]) if with_normals else None,
        )

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), normals=np.zeros((0, 3)))


class InsufficientPointsError(ValueError):
    pass


def farthest_point_sample(cloud, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling starting at ``seed_index``.

    Ties go to the lowest index (``argmax`` returns the first maximum).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = len(pts)
    if k > n:
        raise InsufficientPointsError(f"requested {k} samples from {n} points")
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    out = np.empty(k, dtype=np.int64)
    out[0] = seed_index
    dist = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        out[i] = nxt
        np.minimum(dist, np.sum((pts - pts[nxt]) ** 2, axis=1), out=dist)
    return out
