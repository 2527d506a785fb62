import numpy as np
import pytest

from graspclutter.assets import ObjectAsset, asset_from_descriptor, asset_library, make_box, make_hollow_box
from graspclutter.bvh import surfaces_intersect_brute
from graspclutter.geometry import Pose, PointCloud
from graspclutter.scene import (
    CameraModel,
    PlacementError,
    Scene,
    TargetNotFoundError,
    canonical_json,
    corrupt_segmentation,
    crop_target,
    generate_scene,
    load_scene,
    place_with_rejection,
    read_ply,
    render_cloud,
    sample_stable_pose,
    save_scene,
    scene_to_dict,
    write_ply,
)

from conftest import lone_box_scene


def test_library_assets_rest_on_table():
    for asset in asset_library(12, 5) + [make_hollow_box([0.1, 0.1, 0.1], 0.01)]:
        w = sum(p for _, p in asset.stable_poses)
        assert w == pytest.approx(1.0, abs=1e-6)
        for pose, _ in asset.stable_poses:
            assert abs(pose.apply(asset.mesh.vertices)[:, 2].min()) < 1e-4


def test_descriptor_round_trip():
    a = asset_library(3, 9)[1]
    assert asset_from_descriptor(a.descriptor).asset_id == a.asset_id
    with pytest.raises(ValueError):
        asset_from_descriptor({"kind": "teapot"})


def _two_pose_asset(w):
    box = make_box([0.02, 0.03, 0.04])
    poses = tuple((p, x) for (p, _), x in zip(box.stable_poses[:2], w))
    return ObjectAsset("two", box.mesh, poses, box.descriptor)


def test_stable_pose_weights(rng):
    a = _two_pose_asset((1.0, 0.0))
    first = a.stable_poses[0][0]
    for _ in range(20):
        p = sample_stable_pose(a, rng)
        # zero table extent: only the yaw varies, so the height profile is that of the first pose
        assert np.allclose(p.apply(a.mesh.vertices)[:, 2], first.apply(a.mesh.vertices)[:, 2])
    b = _two_pose_asset((0.5, 0.5))
    z0 = b.stable_poses[0][0].apply(b.mesh.vertices)[:, 2].max()
    hits = sum(abs(sample_stable_pose(b, rng).apply(b.mesh.vertices)[:, 2].max() - z0) < 1e-9 for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        sample_stable_pose(ObjectAsset("none", b.mesh, (), {}), rng)


def test_placement_rejection(rng):
    box = make_box([0.05, 0.05, 0.05])
    scene = place_with_rejection(Scene((), 0.0, (0.1, 0.1)), box, 1, rng)
    assert len(scene.placements) == 1
    slab = make_box([0.6, 0.6, 0.02])
    covered = Scene((), 0.0, (0.0, 0.0)).with_placement(slab, slab.stable_poses[0][0], 1)
    tall = make_box([0.03, 0.03, 0.03])
    flat = Scene(covered.placements, 0.0, (0.05, 0.05))
    # every stable pose overlaps the slab that covers the table
    with pytest.raises(PlacementError):
        place_with_rejection(flat, tall, 10, rng)


def test_generated_scenes_have_no_intersections():
    lib = asset_library(10, 3)
    rng = np.random.default_rng(0)
    for _ in range(100):
        scene = generate_scene(lib, 5, rng)
        ps = scene.placements
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                lo = np.maximum(ps[i].bounds[0], ps[j].bounds[0])
                hi = np.minimum(ps[i].bounds[1], ps[j].bounds[1])
                if np.any(lo > hi):
                    continue
                assert surfaces_intersect_brute(ps[i].mesh.corners, ps[j].mesh.corners) is None


def test_render_empty_scene_is_all_table():
    scene = Scene((), 0.0, (0.2, 0.2), CameraModel.looking_at([0.3, 0.0, 0.5], [0, 0, 0], 32, 24))
    cloud = render_cloud(scene)
    assert len(cloud) == 32 * 24
    assert np.all(cloud.instance_ids == 0)
    assert np.allclose(cloud.points[:, 2], 0.0, atol=1e-12)


def test_render_center_pixel_range():
    cube = make_box([0.1, 0.1, 0.1])
    scene = Scene((), -1.0, (0.0, 0.0)).with_placement(cube, Pose.from_translation([0, 0, -0.05]), 1)
    cam = CameraModel.looking_at([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], 33, 33)
    scene = scene.with_camera(cam)
    cloud = render_cloud(scene)
    center = 16 * 33 + 16
    # top face sits at z = 0, so the center ray travels exactly 1.0
    assert np.linalg.norm(cloud.points[center] - cam.pose.translation) == pytest.approx(1.0, abs=1e-6)
    assert cloud.instance_ids[center] == 1


def test_fully_hidden_object_has_no_points():
    big, small = make_box([0.1, 0.2, 0.2]), make_box([0.03, 0.03, 0.03])
    scene = Scene((), 0.0, (0.2, 0.2))
    scene = scene.with_placement(big, big.stable_poses[0][0], 1)
    scene = scene.with_placement(small, Pose.from_translation([-0.1, 0.0, 0.0]) @ small.stable_poses[0][0], 2)
    # camera looks horizontally along -x at the big box, small box is right behind it
    scene = scene.with_camera(CameraModel.looking_at([0.6, 0.0, 0.02], [0.0, 0.0, 0.02], 64, 48, 30.0))
    cloud, occ = render_cloud(scene, return_occlusion=True)
    assert not np.any(cloud.instance_ids == 2)
    assert occ.visible[2] == 0 and occ.hidden[2] > 0


def _abutting_pair():
    a, b = make_box([0.05, 0.1, 0.05]), make_box([0.05, 0.1, 0.05])
    scene = Scene((), 0.0, (0.2, 0.2))
    scene = scene.with_placement(a, Pose.from_translation([-0.025, 0, 0]) @ a.stable_poses[0][0], 1)
    scene = scene.with_placement(b, Pose.from_translation([0.025, 0, 0]) @ b.stable_poses[0][0], 2)
    return scene.with_camera(CameraModel.looking_at([0.0, -0.3, 0.5], [0, 0, 0.03], 160, 120))


def test_corrupt_segmentation_identity_and_merge(rng):
    cloud = render_cloud(_abutting_pair())
    same = corrupt_segmentation(cloud, 0.0, 0.0, rng)
    assert np.array_equal(same.instance_ids, cloud.instance_ids)
    merged = corrupt_segmentation(cloud, 0.0, 1.0, rng, occluded={2})
    assert not np.any(merged.instance_ids == 2)
    assert np.array_equal(merged.points, cloud.points)


def test_corrupt_segmentation_flip_rate():
    from graspclutter.scene import _boundary_neighbors

    cloud = render_cloud(_abutting_pair())
    band = _boundary_neighbors(cloud.points, cloud.instance_ids, 0.005) >= 0
    rates = []
    for seed in range(20):
        out = corrupt_segmentation(cloud, 0.5, 0.0, np.random.default_rng(seed))
        rates.append(np.mean(out.instance_ids[band] != cloud.instance_ids[band]))
    assert band.sum() > 50
    assert np.mean(rates) == pytest.approx(0.5, abs=0.05)


def test_crop_target(rng):
    scene = lone_box_scene()
    cloud = render_cloud(scene)
    with pytest.raises(TargetNotFoundError, match="target not found"):
        crop_target(cloud, 7)
    X, X_o = crop_target(cloud, 1, box_size=10.0, center_noise=0.0, n_points=len(cloud), rng=rng)
    assert sorted(map(tuple, X.points)) == sorted(map(tuple, cloud.points))
    assert len(X_o) > 0 and np.all(X_o.instance_ids == 1)
    X, X_o = crop_target(cloud, 1, n_points=4096, rng=rng)
    assert len(X) == 4096
    pool = {tuple(p) for p in cloud.points}
    assert all(tuple(p) in pool for p in X.points)


def test_scene_json_round_trip_is_byte_identical(tmp_path):
    scene = generate_scene(asset_library(6, 4), 4, np.random.default_rng(2))
    save_scene(scene, tmp_path / "a.json")
    save_scene(load_scene(tmp_path / "a.json"), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert canonical_json(scene_to_dict(scene)) == (tmp_path / "a.json").read_text()


def test_ply_round_trip(tmp_path):
    cloud = render_cloud(lone_box_scene())
    cloud = PointCloud(cloud.points, cloud.instance_ids, np.arange(len(cloud)) % 2, cloud.normals)
    write_ply(cloud, tmp_path / "c.ply")
    back = read_ply(tmp_path / "c.ply")
    assert np.allclose(back.points, cloud.points, atol=1e-8)
    assert np.array_equal(back.instance_ids, cloud.instance_ids)
    assert np.array_equal(back.source_flag, cloud.source_flag)
