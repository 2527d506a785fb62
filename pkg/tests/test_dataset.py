import collections

import numpy as np
import pytest

from graspclutter.bvh import point_mesh_distance
from graspclutter.config import RunConfig
from graspclutter.dataset import (
    BalancedSampler,
    DatasetRecord,
    EmptyPartitionError,
    LabelledGrasp,
    SUBSET_ORDER,
    attach_gripper_points,
    audit_labels,
    export_balanced_batch,
    partition_pool,
    read_jsonl,
    scene_pool,
    write_jsonl,
)
from graspclutter.geometry import GRIPPER_ID, PointCloud, Pose
from graspclutter.grasps import Grasp, GraspLabel, GraspSet, Quality

from conftest import lone_box_scene

GP, GM, GH, GF = SUBSET_ORDER


def item(subset, k):
    q = Quality.POSITIVE if subset is GraspSet.G_PLUS else Quality.NEGATIVE
    return LabelledGrasp("s", 1, Grasp(Pose.from_translation([k, 0, 0])), GraspLabel(q, False, subset))


def test_quotas():
    assert list(BalancedSampler.quotas(4).values()) == [1, 1, 1, 1]
    assert list(BalancedSampler.quotas(6).values()) == [2, 2, 1, 1]
    assert list(BalancedSampler.quotas(7).values()) == [2, 2, 2, 1]
    assert list(BalancedSampler.quotas(0).values()) == [0, 0, 0, 0]
    assert list(BalancedSampler.quotas(6)) == [GP, GM, GH, GF]


def test_epochs_draw_each_item_evenly():
    parts = {GP: [item(GP, k) for k in range(5)], GM: [item(GM, k) for k in range(3)], GH: [item(GH, 0)], GF: [item(GF, 0)]}
    sampler = BalancedSampler(parts, rng_seed=3)
    seen = collections.Counter()
    for _ in range(50):
        for e in sampler.batch(8):
            if e.label.set is GP:
                seen[float(e.grasp.pose.translation[0])] += 1
    counts = [seen[k] for k in range(5)]
    assert sum(counts) == 100 and max(counts) - min(counts) <= 1


def test_batches_are_seeded_and_balanced():
    pool = [item(s, k) for s in SUBSET_ORDER for k in range(4)]
    a = export_balanced_batch(pool, 10, rng_seed=1)
    b = export_balanced_batch(partition_pool(pool), 10, rng_seed=1)
    assert a == b
    assert collections.Counter(e.label.set for e in a) == {GP: 3, GM: 3, GH: 2, GF: 2}


def test_empty_partition_is_an_error():
    pool = [item(s, 0) for s in (GP, GM, GH)]
    with pytest.raises(EmptyPartitionError, match="G_free"):
        export_balanced_batch(pool, 4)


def test_attach_gripper_points(gripper, rng):
    X = PointCloud(rng.uniform(size=(50, 3)), np.ones(50))
    g = Pose.from_axis_angle([0.3, 1.0, 0.2], 0.7, [0.1, -0.2, 0.3])
    out = attach_gripper_points(X, g, gripper, 128, rng)
    assert len(out) == 178
    assert np.all(out.source_flag[:50] == 0) and np.all(out.source_flag[50:] == 1)
    assert np.all(out.instance_ids[50:] == GRIPPER_ID)
    assert np.array_equal(out.points[:50], X.points)
    body = gripper.body_mesh.transformed(g)
    assert np.max(point_mesh_distance(out.points[50:], body.corners)) < 1e-6
    assert attach_gripper_points(X, g, gripper, 0, rng) is X


def test_jsonl_round_trip(tmp_path, gripper, rng):
    X = PointCloud(rng.uniform(size=(20, 3)).astype(np.float32), np.r_[np.zeros(5), np.ones(15)])
    g = Pose.from_axis_angle([0, 0, 1], 0.4, [0.01, 0.02, 0.3])
    rec = DatasetRecord("scene_0000.json", attach_gripper_points(X, g, gripper, 16, rng), 1, g,
                        GraspLabel(Quality.POSITIVE, False, GraspSet.G_PLUS), 20)
    assert write_jsonl([rec, rec], tmp_path / "d.jsonl") == 2
    back = read_jsonl(tmp_path / "d.jsonl")
    assert len(back) == 2
    r = back[0]
    assert r.label == rec.label and r.n_crop == 20 and r.gripper_augmented
    assert np.allclose(r.cloud.points, rec.cloud.points, atol=1e-6)
    assert np.array_equal(r.cloud.instance_ids, rec.cloud.instance_ids)
    assert r.pose.allclose(rec.pose, 0.0)
    assert (tmp_path / "d.jsonl").read_text().splitlines()[0] == rec.to_json_line()
    with pytest.raises(ValueError):
        DatasetRecord("s", rec.cloud, 1, g, rec.label, 10)


def test_scene_pool_labels_agree_with_oracles():
    cfg = RunConfig.from_dict({"reference": {"n_candidates": 60}, "dataset": {"free_per_scene": 5}})
    scene = lone_box_scene()
    crops, pool = scene_pool(scene, "box", cfg, np.random.default_rng(0))
    assert list(crops) == [1]
    subsets = collections.Counter(e.label.set for e in pool)
    assert subsets[GraspSet.G_FREE] == 5 and subsets[GraspSet.G_PLUS] > 0
    audit = audit_labels(pool, {"box": scene}, cfg, np.random.default_rng(1), fraction=0.25)
    assert audit["checked"] >= 1 and audit["agreement"] == 1.0
