"""Labelled grasp records for training external collision / quality models, with balanced batching."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .collision import exact_collision
from .geometry import GRIPPER_ID, GripperModel, PointCloud, Pose
from .grasps import (
    Grasp,
    GraspLabel,
    GraspSet,
    Quality,
    free_space_grasps,
    generate_reference_set,
    hard_negatives,
)
from .quality import quality_oracle
from .scene import Scene, canonical_json, crop_target, render_cloud

SUBSET_ORDER = (GraspSet.G_PLUS, GraspSet.G_MINUS, GraspSet.G_HARD_NEGATIVE, GraspSet.G_FREE)


class EmptyPartitionError(ValueError):
    pass


# --------------------------------------------------------------------------- encoding


def _encode(arr: np.ndarray, dtype: str) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()).decode("ascii")


def _decode(text: str, dtype: str, shape=(-1,)) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype=np.dtype(dtype)).reshape(shape)


@dataclass(frozen=True)
class DatasetRecord:
    """One labelled grasp on one scene crop.

    ``cloud`` holds the crop (flag 0) followed by any gripper points (flag 1);
    ``n_crop`` says how many leading points belong to the crop.
    """

    scene: str
    cloud: PointCloud
    target: int
    pose: Pose
    label: GraspLabel
    n_crop: int

    def __post_init__(self):
        if not 0 <= self.n_crop <= len(self.cloud):
            raise ValueError("n_crop out of range")
        if np.any(self.cloud.source_flag[: self.n_crop] != 0) or np.any(self.cloud.source_flag[self.n_crop :] != 1):
            raise ValueError("crop points must carry flag 0 and gripper points flag 1")

    @property
    def gripper_augmented(self) -> bool:
        return len(self.cloud) > self.n_crop

    @property
    def crop(self) -> PointCloud:
        return self.cloud.subset(slice(0, self.n_crop))

    def to_dict(self) -> dict:
        q, t = self.pose.as_list()
        return {
            "scene": self.scene,
            "target": self.target,
            "quaternion_wxyz": q,
            "translation_xyz": t,
            "label": {"quality": self.label.quality.value, "collision": self.label.collision, "set": self.label.set.value},
            "n_crop": self.n_crop,
            "gripper_augmented": self.gripper_augmented,
            "n_points": len(self.cloud),
            "points_f4le": _encode(self.cloud.points, "<f4"),
            "instance_ids_i4le": _encode(self.cloud.instance_ids, "<i4"),
            "source_flags_u1": _encode(self.cloud.source_flag, "u1"),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        n = int(d["n_points"])
        cloud = PointCloud(
            _decode(d["points_f4le"], "<f4", (n, 3)).astype(float),
            _decode(d["instance_ids_i4le"], "<i4").astype(np.int64),
            _decode(d["source_flags_u1"], "u1"),
        )
        lab = d["label"]
        return cls(
            d["scene"],
            cloud,
            int(d["target"]),
            Pose(d["quaternion_wxyz"], d["translation_xyz"]),
            GraspLabel(Quality(lab["quality"]), bool(lab["collision"]), GraspSet(lab["set"])),
            int(d["n_crop"]),
        )


def write_jsonl(records: Iterable[DatasetRecord], path) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json_line() + "\n")
            n += 1
    return n


def read_jsonl(path) -> list[DatasetRecord]:
    with open(path) as fh:
        return [DatasetRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


# --------------------------------------------------------------------------- gripper points


def sample_gripper_surface(gripper: GripperModel, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` area-weighted points on the gripper body surface, gripper frame."""
    if m == 0:
        return np.zeros((0, 3))
    pts, _, _ = gripper.body_mesh.sample_surface(m, rng)
    return pts


def attach_gripper_points(
    X: PointCloud, g: Pose, gripper: GripperModel, m: int = 128, rng: np.random.Generator | None = None
) -> PointCloud:
    """Append ``m`` gripper-surface points at pose ``g`` flagged 1; scene points keep flag 0."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return X
    rng = rng or np.random.default_rng(0)
    pts = g.apply(sample_gripper_surface(gripper, m, rng))
    grip = PointCloud(
        pts,
        np.full(m, GRIPPER_ID),
        np.ones(m, dtype=np.uint8),
        np.zeros((m, 3)) if X.has_normals else None,
    )
    base = PointCloud(X.points, X.instance_ids, np.zeros(len(X), dtype=np.uint8), X.normals)
    return PointCloud.concatenate([base, grip])


# --------------------------------------------------------------------------- balanced batches


class BalancedSampler:
    """Draws balanced batches from the four grasp subsets.

    Every batch takes ``floor(b/4)`` records per subset; the remaining
    ``b mod 4`` go one each to the subsets in the fixed order G_plus, G_minus,
    G_hard_negative, G_free. Within a subset, records are drawn from a random
    permutation and a fresh permutation starts only when one is used up.
    """

    def __init__(self, partitions: dict, rng_seed: int = 0):
        self.partitions = {}
        for s in SUBSET_ORDER:
            items = list(partitions.get(s, partitions.get(s.value, [])))
            if not items:
                raise EmptyPartitionError(f"partition {s.value} is empty")
            self.partitions[s] = items
        self.rng = np.random.default_rng(rng_seed)
        self._queues = {s: [] for s in SUBSET_ORDER}

    @staticmethod
    def quotas(batch_size: int) -> dict:
        if batch_size < 0:
            raise ValueError("batch_size must be non-negative")
        base, rem = divmod(batch_size, len(SUBSET_ORDER))
        return {s: base + (1 if k < rem else 0) for k, s in enumerate(SUBSET_ORDER)}

    def _draw(self, s: GraspSet, k: int) -> list:
        out = []
        queue = self._queues[s]
        items = self.partitions[s]
        while len(out) < k:
            if not queue:
                queue.extend(self.rng.permutation(len(items)).tolist())
            out.append(items[queue.pop(0)])
        return out

    def batch(self, batch_size: int) -> list:
        out = []
        for s, k in self.quotas(batch_size).items():
            out.extend(self._draw(s, k))
        return out


def export_balanced_batch(partitions, batch_size: int, rng_seed: int = 0) -> list:
    """One balanced batch from a pool already split by subset (or a flat list of labelled items)."""
    if not isinstance(partitions, dict):
        partitions = partition_pool(partitions)
    return BalancedSampler(partitions, rng_seed).batch(batch_size)


# --------------------------------------------------------------------------- building and auditing


@dataclass(frozen=True)
class LabelledGrasp:
    """A pool entry: which scene crop, which grasp, which label. Clouds are attached on export."""

    scene: str
    target: int
    grasp: Grasp
    label: GraspLabel


@dataclass
class SceneCrop:
    scene: Scene
    target: int
    X: PointCloud


def scene_pool(scene: Scene, scene_name: str, cfg, rng: np.random.Generator, targets: Sequence[int] | None = None):
    """Label reference, hard-negative and free-space grasps on one scene.

    Every object with at least ``min_target_points`` visible points is a
    target unless ``targets`` is given; each gets its own 4096-point crop.
    Returns ``{target: SceneCrop}`` and the labelled grasps.
    """
    gripper = cfg.gripper.build()
    sc, ds = cfg.scene, cfg.dataset
    mu = cfg.cascade.friction_mu
    cloud = render_cloud(scene, depth_noise=sc.depth_noise, rng=rng)
    if targets is None:
        ids, counts = np.unique(cloud.instance_ids[cloud.instance_ids > 0], return_counts=True)
        targets = [int(i) for i, c in zip(ids, counts) if c >= sc.min_target_points]
    crops, labelled = {}, []
    for target in targets:
        X, X_o = crop_target(cloud, target, sc.crop_box, sc.crop_noise, sc.crop_points, rng)
        crops[target] = SceneCrop(scene, target, PointCloud(X.points, X.instance_ids, np.zeros(len(X), dtype=np.uint8)))
        ref = generate_reference_set(scene, target, cfg.reference.n_candidates, rng, gripper, mu)
        labelled.extend(LabelledGrasp(scene_name, target, g, lab) for g, lab in ref)
        positives = [g for g, lab in ref if lab.quality is Quality.POSITIVE]
        hn = hard_negatives(
            positives, X_o, scene, target, gripper, ds.far_threshold, rng, ds.hard_negative_translation,
            np.radians(ds.hard_negative_rotation_deg),
        )
        for g in hn:
            if quality_oracle(g.pose, scene, target, gripper, mu):
                continue  # the perturbation happened to land on another good grasp
            collides = exact_collision(gripper, g.pose, scene, with_distance=False).colliding
            labelled.append(LabelledGrasp(scene_name, target, g, GraspLabel(Quality.NEGATIVE, collides, GraspSet.G_HARD_NEGATIVE)))
    if targets:
        # free-space grasps hold nothing, so any crop of the scene serves as their context
        t0 = targets[0]
        for g in free_space_grasps(scene, ds.free_per_scene, rng, gripper):
            labelled.append(LabelledGrasp(scene_name, t0, g, GraspLabel(Quality.NEGATIVE, False, GraspSet.G_FREE)))
    return crops, labelled


def make_record(entry: LabelledGrasp, crop: SceneCrop, gripper: GripperModel, m: int, rng: np.random.Generator) -> DatasetRecord:
    cloud = attach_gripper_points(crop.X, entry.grasp.pose, gripper, m, rng)
    return DatasetRecord(entry.scene, cloud, entry.target, entry.grasp.pose, entry.label, len(crop.X))


def partition_pool(pool: Sequence) -> dict:
    parts = {s: [] for s in SUBSET_ORDER}
    for e in pool:
        parts[e.label.set].append(e)
    return parts


def audit_labels(entries: Sequence, scenes: dict, cfg, rng: np.random.Generator, fraction: float | None = None) -> dict:
    """Re-derive labels of a random ``fraction`` of entries from the oracles; report agreement.

    ``entries`` are pool entries or records; ``scenes`` maps scene name to Scene.
    """
    fraction = cfg.dataset.audit_fraction if fraction is None else fraction
    if not entries:
        return {"checked": 0, "agree": 0, "agreement": 1.0, "mismatches": []}
    gripper = cfg.gripper.build()
    k = min(len(entries), max(1, math.ceil(fraction * len(entries))))
    pick = np.sort(rng.choice(len(entries), size=k, replace=False))
    mismatches = []
    for i in pick:
        e = entries[int(i)]
        pose = e.pose if isinstance(e, DatasetRecord) else e.grasp.pose
        scene = scenes[e.scene]
        good = quality_oracle(pose, scene, e.target, gripper, cfg.cascade.friction_mu)
        collides = exact_collision(gripper, pose, scene, with_distance=False).colliding
        if good != (e.label.quality is Quality.POSITIVE) or collides != e.label.collision:
            mismatches.append(int(i))
    return {"checked": k, "agree": k - len(mismatches), "agreement": (k - len(mismatches)) / k, "mismatches": mismatches}


def export_dataset(scene_paths: Sequence, out_path, cfg, batch_size: int, n_batches: int = 1, seed: int = 0) -> dict:
    """Label every scene file (in the given order), then write balanced batches as JSON lines.

    Returns pool sizes per subset, the number of records written and the
    oracle audit of the pool.
    """
    from .scene import load_scene

    root = np.random.SeedSequence(seed)
    scene_ss, sampler_ss, grip_ss, audit_ss = root.spawn(4)
    crops, pool, scenes = {}, [], {}
    for path, ss in zip(scene_paths, scene_ss.spawn(len(scene_paths))):
        name = Path(path).name
        scenes[name] = load_scene(path)
        scene_crops, entries = scene_pool(scenes[name], name, cfg, np.random.default_rng(ss))
        crops.update({(name, t): c for t, c in scene_crops.items()})
        pool.extend(entries)
    sampler = BalancedSampler(partition_pool(pool), int(sampler_ss.generate_state(1)[0]))
    gripper = cfg.gripper.build()
    grng = np.random.default_rng(grip_ss)
    records = (
        make_record(e, crops[(e.scene, e.target)], gripper, cfg.dataset.gripper_points, grng)
        for _ in range(n_batches)
        for e in sampler.batch(batch_size)
    )
    written = write_jsonl(records, out_path)
    audit = audit_labels(pool, scenes, cfg, np.random.default_rng(audit_ss))
    counts = {s.value: len(v) for s, v in partition_pool(pool).items()}
    return {"pool": counts, "written": written, "audit": audit}
