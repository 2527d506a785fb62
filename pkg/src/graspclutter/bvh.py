"""Bounding volume hierarchy and vectorized triangle primitives.

Every exact predicate here has a brute-force counterpart that calls the same
elementwise kernel, so the accelerated and exhaustive paths agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, TriMesh

_RAY_EPS = 1e-12
_BOX_PAD = 1e-9
_PARITY_DIR = np.array([0.5377, 0.3201, 0.7799]) / np.linalg.norm([0.5377, 0.3201, 0.7799])


@dataclass(frozen=True, eq=False)
class BVH:
    """Binary AABB tree over a triangle soup.

    Every node covers the contiguous slice ``order[start:end]``; leaves hold at
    most ``LEAF_SIZE`` triangles.
    """

    corners: np.ndarray  # (T, 3, 3)
    order: np.ndarray  # (T,)
    lo: np.ndarray  # (N, 3)
    hi: np.ndarray
    left: np.ndarray  # (N,) -1 for leaves
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    leaf_tris: np.ndarray  # (N, LEAF_SIZE) triangle ids, -1 padded; only meaningful on leaves

    LEAF_SIZE = 4

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def n_triangles(self) -> int:
        return len(self.corners)

    def transformed(self, pose: Pose) -> "BVH":
        """Same topology, bounds refit around the moved triangles."""
        corners = pose.apply(self.corners.reshape(-1, 3)).reshape(-1, 3, 3)
        lo, hi = _refit(corners, self.order, self.start, self.end)
        return BVH(corners, self.order, lo, hi, self.left, self.right, self.start, self.end, self.leaf_tris)


def _refit(corners, order, start, end):
    tlo = np.vstack([corners.min(axis=1)[order], np.full((1, 3), np.inf)])
    thi = np.vstack([corners.max(axis=1)[order], np.full((1, 3), -np.inf)])
    idx = np.column_stack([start, end]).ravel()
    return np.minimum.reduceat(tlo, idx)[::2], np.maximum.reduceat(thi, idx)[::2]


def build_bvh(mesh_or_corners) -> BVH:
    corners = mesh_or_corners.corners if isinstance(mesh_or_corners, TriMesh) else np.asarray(mesh_or_corners, dtype=float)
    n = len(corners)
    cent = corners.mean(axis=1)
    order = np.arange(n)
    left, right, start, end = [], [], [], []

    def new_node(s, e):
        left.append(-1)
        right.append(-1)
        start.append(s)
        end.append(e)
        return len(start) - 1

    root = new_node(0, n)
    stack = [root] if n > BVH.LEAF_SIZE else []
    while stack:
        node = stack.pop()
        s, e = start[node], end[node]
        c = cent[order[s:e]]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[s:e] = order[s:e][part]
        a, b = new_node(s, s + mid), new_node(s + mid, e)
        left[node], right[node] = a, b
        for child in (a, b):
            if end[child] - start[child] > BVH.LEAF_SIZE:
                stack.append(child)
    left, right = np.array(left), np.array(right)
    start, end = np.array(start), np.array(end)
    leaf_tris = np.full((len(start), BVH.LEAF_SIZE), -1, dtype=np.int64)
    for i in np.flatnonzero(left < 0):
        ids = order[start[i] : end[i]]
        leaf_tris[i, : len(ids)] = ids
    lo, hi = _refit(corners, order, start, end) if n else (np.zeros((1, 3)), np.zeros((1, 3)))
    return BVH(corners, order, lo, hi, left, right, start, end, leaf_tris)


# --------------------------------------------------------------------------- rays


def ray_triangle_t(origins: np.ndarray, dirs: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Möller-Trumbore hit distances for every (ray, triangle) pair, ``inf`` on miss.

    ``origins``/``dirs`` are (R, 3); ``corners`` is (T, 3, 3); returns (R, T).
    """
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    p = np.cross(dirs[:, None, :], e2[None, :, :])
    det = np.einsum("tk,rtk->rt", e1, p)
    ok = np.abs(det) > 1e-18
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("rtk,rtk->rt", s, p) * inv
    q = np.cross(s, e1[None, :, :])
    v = np.einsum("rk,rtk->rt", dirs, q) * inv
    t = np.einsum("tk,rtk->rt", e2, q) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > _RAY_EPS)
    return np.where(hit, t, np.inf)


def _nearest(t_row: np.ndarray, tri_ids: np.ndarray):
    if t_row.size == 0:
        return None
    best = t_row.min()
    if not np.isfinite(best):
        return None
    return float(best), int(tri_ids[t_row == best].min())


def ray_cast_brute(corners: np.ndarray, origin, direction):
    """Nearest positive hit ``(distance, triangle)`` by testing every triangle."""
    o = np.asarray(origin, dtype=float)[None]
    d = np.asarray(direction, dtype=float)[None]
    return _nearest(ray_triangle_t(o, d, corners)[0], np.arange(len(corners)))


def _slab(lo, hi, origin, inv_dir):
    t1 = (lo - origin) * inv_dir
    t2 = (hi - origin) * inv_dir
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    return tmin, tmax


def ray_cast(bvh: BVH, origin, direction):
    """Nearest positive hit ``(distance, triangle)`` or ``None`` using the tree."""
    if bvh.n_triangles == 0:
        return None
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        tmin, tmax = _slab(bvh.lo - _BOX_PAD, bvh.hi + _BOX_PAD, o, inv)
    node_hit = (tmax >= np.maximum(tmin, 0.0)) & ~np.isnan(tmin)
    best = None
    stack = [0]
    while stack:
        node = stack.pop()
        if not node_hit[node] or (best is not None and tmin[node] > best[0] + _BOX_PAD):
            continue
        if bvh.left[node] < 0:
            ids = bvh.order[bvh.start[node] : bvh.end[node]]
            hit = _nearest(ray_triangle_t(o[None], d[None], bvh.corners[ids])[0], ids)
            if hit is not None and (best is None or hit[0] < best[0] or (hit[0] == best[0] and hit[1] < best[1])):
                best = hit
        else:
            stack.extend((bvh.right[node], bvh.left[node]))
    return best


def ray_cast_many(corners: np.ndarray, origins: np.ndarray, dirs: np.ndarray, chunk: int = 4096):
    """Vectorized nearest hits for many rays against one triangle set: (t, tri) arrays."""
    n = len(origins)
    t_out = np.full(n, np.inf)
    tri_out = np.full(n, -1, dtype=np.int64)
    if len(corners) == 0 or n == 0:
        return t_out, tri_out
    step = max(1, chunk * 64 // max(len(corners), 1))
    for s in range(0, n, step):
        t = ray_triangle_t(origins[s : s + step], dirs[s : s + step], corners)
        k = np.argmin(t, axis=1)
        t_out[s : s + step] = t[np.arange(len(k)), k]
        tri_out[s : s + step] = np.where(np.isfinite(t_out[s : s + step]), k, -1)
    return t_out, tri_out


def rays_hit_box(origins: np.ndarray, dirs: np.ndarray, lo, hi) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        tmin, tmax = _slab(np.asarray(lo), np.asarray(hi), origins, 1.0 / dirs)
    return (tmax >= np.maximum(tmin, 0.0)) & ~np.isnan(tmin)


def points_inside(points: np.ndarray, corners: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Ray-parity inside test against a closed triangle mesh."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.zeros(len(pts), dtype=bool)
    if len(corners) == 0 or len(pts) == 0:
        return out
    lo, hi = corners.min(axis=(0, 1)), corners.max(axis=(0, 1))
    cand = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1))
    step = max(1, chunk * 64 // len(corners))
    for s in range(0, len(cand), step):
        idx = cand[s : s + step]
        d = np.broadcast_to(_PARITY_DIR, (len(idx), 3))
        hits = np.isfinite(ray_triangle_t(pts[idx], d, corners)).sum(axis=1)
        out[idx] = hits % 2 == 1
    return out


# --------------------------------------------------------------------------- separating axis tests


def tri_tri_intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise triangle overlap, (P, 3, 3) x (P, 3, 3) -> (P,) bool.

    Separating axis test over both normals, the nine edge cross products and
    the six in-plane edge normals. Touching counts as overlapping.
    """
    ea = a[:, [1, 2, 0]] - a
    eb = b[:, [1, 2, 0]] - b
    na = np.cross(ea[:, 0], ea[:, 1])
    nb = np.cross(eb[:, 0], eb[:, 1])
    cross = np.cross(ea[:, :, None, :], eb[:, None, :, :]).reshape(-1, 9, 3)
    in_a = np.cross(na[:, None, :], ea)
    in_b = np.cross(nb[:, None, :], eb)
    axes = np.concatenate([na[:, None], nb[:, None], cross, in_a, in_b], axis=1)
    pa = np.einsum("pkd,pvd->pkv", axes, a)
    pb = np.einsum("pkd,pvd->pkv", axes, b)
    separated = (pa.max(axis=2) < pb.min(axis=2)) | (pb.max(axis=2) < pa.min(axis=2))
    return ~separated.any(axis=1)


def tri_box_intersect(tris: np.ndarray, centers: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Pairwise triangle vs axis-aligned box overlap (13-axis test), touching counts."""
    v = tris - centers[:, None, :]
    e = v[:, [1, 2, 0]] - v
    n = np.cross(e[:, 0], e[:, 1])
    unit = np.eye(3)
    cross = np.cross(e[:, :, None, :], unit[None, None, :, :]).reshape(-1, 9, 3)
    axes = np.concatenate([np.broadcast_to(unit, (len(v), 3, 3)), n[:, None], cross], axis=1)
    p = np.einsum("pkd,pvd->pkv", axes, v)
    r = np.einsum("pkd,pd->pk", np.abs(axes), half)
    separated = (p.min(axis=2) > r) | (p.max(axis=2) < -r)
    return ~separated.any(axis=1)


def aabb_overlap(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    return np.all((lo_a <= hi_b) & (lo_b <= hi_a), axis=-1)


# --------------------------------------------------------------------------- tree vs tree


def candidate_pairs(a: BVH, b: BVH) -> tuple[np.ndarray, np.ndarray]:
    """Triangle pairs whose leaf boxes and own boxes overlap (breadth-first, vectorized)."""
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if a.n_triangles == 0 or b.n_triangles == 0:
        return empty
    na = np.zeros(1, dtype=np.int64)
    nb = np.zeros(1, dtype=np.int64)
    leaf_a, leaf_b = [], []
    vol_a = np.prod(a.hi - a.lo, axis=1)
    vol_b = np.prod(b.hi - b.lo, axis=1)
    while len(na):
        keep = aabb_overlap(a.lo[na], a.hi[na], b.lo[nb], b.hi[nb])
        na, nb = na[keep], nb[keep]
        la, lb = a.left[na] < 0, b.left[nb] < 0
        both = la & lb
        leaf_a.append(na[both])
        leaf_b.append(nb[both])
        na, nb, la, lb = na[~both], nb[~both], la[~both], lb[~both]
        split_a = ~la & (lb | (vol_a[na] >= vol_b[nb]))
        sa, sb = na[split_a], nb[split_a]
        ta, tb = na[~split_a], nb[~split_a]
        na = np.concatenate([a.left[sa], a.right[sa], ta, ta])
        nb = np.concatenate([sb, sb, b.left[tb], b.right[tb]])
    la = np.concatenate(leaf_a)
    lb = np.concatenate(leaf_b)
    if len(la) == 0:
        return empty
    ta = np.repeat(a.leaf_tris[la], BVH.LEAF_SIZE, axis=1).ravel()
    tb = np.tile(b.leaf_tris[lb], (1, BVH.LEAF_SIZE)).ravel()
    ok = (ta >= 0) & (tb >= 0)
    ta, tb = ta[ok], tb[ok]
    ca, cb = a.corners[ta], b.corners[tb]
    keep = aabb_overlap(ca.min(axis=1), ca.max(axis=1), cb.min(axis=1), cb.max(axis=1))
    return ta[keep], tb[keep]


def _first_hit(ta, tb, ca, cb):
    if len(ta) == 0:
        return None
    hit = tri_tri_intersect(ca, cb)
    if not hit.any():
        return None
    # lowest (a, b) pair so the witness does not depend on traversal order
    idx = np.flatnonzero(hit)
    k = idx[np.lexsort((tb[idx], ta[idx]))[0]]
    return int(ta[k]), int(tb[k])


def surfaces_intersect(a: BVH, b: BVH):
    """Witness ``(tri_a, tri_b)`` of intersecting surfaces, or ``None``."""
    ta, tb = candidate_pairs(a, b)
    return _first_hit(ta, tb, a.corners[ta], b.corners[tb])


def surfaces_intersect_brute(ca: np.ndarray, cb: np.ndarray):
    """All-pairs counterpart of :func:`surfaces_intersect`."""
    ta = np.repeat(np.arange(len(ca)), len(cb))
    tb = np.tile(np.arange(len(cb)), len(ca))
    # per-pair box rejection is exact: disjoint boxes imply disjoint triangles
    keep = aabb_overlap(ca.min(axis=1)[ta], ca.max(axis=1)[ta], cb.min(axis=1)[tb], cb.max(axis=1)[tb])
    ta, tb = ta[keep], tb[keep]
    return _first_hit(ta, tb, ca[ta], cb[tb])


# --------------------------------------------------------------------------- distances


def point_triangle_distance(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from points (P, 3) to triangles (P, 3, 3), closest-feature classification."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, p - a

    def dot(x, y):
        return np.einsum("ij,ij->i", x, y)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        closest = a + v[:, None] * ab + w[:, None] * ac
        # edge regions
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    closest = np.where(on_bc[:, None], b + t_bc[:, None] * (c - b), closest)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest = np.where(on_ac[:, None], a + t_ac[:, None] * ac, closest)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest = np.where(on_ab[:, None], a + t_ab[:, None] * ab, closest)
    closest = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, closest)
    closest = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, closest)
    closest = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, closest)
    return np.linalg.norm(p - closest, axis=1)


def segment_segment_distance(p1, q1, p2, q2) -> np.ndarray:
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-30, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = np.where(e > 1e-30, (b * s + f) / e, 0.0)
        s = np.where(t < 0, np.where(a > 1e-30, np.clip(-c / a, 0, 1), 0.0), s)
        s = np.where(t > 1, np.where(a > 1e-30, np.clip((b - c) / a, 0, 1), 0.0), s)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm((p1 + d1 * s[:, None]) - (p2 + d2 * t[:, None]), axis=1)


def triangle_pair_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum distance between non-intersecting triangle pairs (P, 3, 3) x (P, 3, 3)."""
    best = np.full(len(a), np.inf)
    for k in range(3):
        best = np.minimum(best, point_triangle_distance(a[:, k], b))
        best = np.minimum(best, point_triangle_distance(b[:, k], a))
        for m in range(3):
            best = np.minimum(
                best,
                segment_segment_distance(a[:, k], a[:, (k + 1) % 3], b[:, m], b[:, (m + 1) % 3]),
            )
    return best


def mesh_distance(ca: np.ndarray, cb: np.ndarray, chunk: int = 100_000) -> float:
    """Minimum distance between two disjoint triangle sets (all pairs)."""
    ta = np.repeat(np.arange(len(ca)), len(cb))
    tb = np.tile(np.arange(len(cb)), len(ca))
    best = np.inf
    for s in range(0, len(ta), chunk):
        i, j = ta[s : s + chunk], tb[s : s + chunk]
        best = min(best, float(triangle_pair_distance(ca[i], cb[j]).min()))
    return best


def point_mesh_distance(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        out[i] = point_triangle_distance(np.broadcast_to(p, (len(corners), 3)), corners).min()
    return out
