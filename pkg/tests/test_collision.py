import numpy as np
import pytest

from graspclutter.assets import asset_library, make_box
from graspclutter.collision import (
    SoftCollisionParams,
    VoxelGrid,
    exact_collision,
    soft_collision_score,
    soft_score_from_evidence,
    voxel_collision,
    voxelize_scene,
)
from graspclutter.geometry import PointCloud, Pose, random_rotation
from graspclutter.scene import Scene, generate_scene

from conftest import lone_box_scene, side_grasp

# (sigmoid(2) - sigmoid(-2)) / (1 - sigmoid(-2)) for count 1 plus full proximity
ONE_POINT_INSIDE = 0.8646647167633873


def test_far_above_is_free_with_gap(gripper):
    scene = lone_box_scene(camera=False)
    g = Pose.from_translation([0.0, 0.0, 1.0])
    res = exact_collision(gripper, g, scene)
    assert not res.colliding
    # wrist is the lowest point of an upward-facing gripper; box top at 0.04, table below it
    assert res.min_distance == pytest.approx(0.96, abs=1e-9)


def test_gripper_inside_box_collides(gripper):
    big = make_box([0.5, 0.5, 0.5])
    scene = Scene((), 0.0, (0.2, 0.2)).with_placement(big, big.stable_poses[0][0], 1)
    # body entirely inside the box: no surface crossing, caught by containment
    res = exact_collision(gripper, Pose.from_translation([0.0, 0.0, 0.2]), scene)
    assert res.colliding and res.instance == 1


def test_table_contact_counts(gripper):
    scene = Scene((), 0.0, (0.2, 0.2))
    touching = Pose.from_translation([0.0, 0.0, 0.0])
    assert exact_collision(gripper, touching, scene).colliding
    assert exact_collision(gripper, touching, scene).instance == 0
    assert not exact_collision(gripper, touching, scene, exclude_instance=0).colliding
    assert not exact_collision(gripper, Pose.from_translation([0, 0, 1e-6]), scene).colliding


def test_side_grasp_on_box_is_free_but_deep_one_collides(gripper):
    scene = lone_box_scene(camera=False)
    assert not exact_collision(gripper, side_grasp(), scene).colliding
    # palm pushed down onto the box top
    assert exact_collision(gripper, side_grasp(0.03, 0.07), scene, exclude_instance=0).instance == 1


def test_tree_matches_brute_force(gripper, rng):
    scene = generate_scene(asset_library(8, 1), 5, rng)
    for _ in range(40):
        g = Pose.from_rotation(random_rotation(rng), rng.uniform([-0.15, -0.15, 0.0], [0.15, 0.15, 0.2]))
        a = exact_collision(gripper, g, scene, with_distance=False)
        b = exact_collision(gripper, g, scene, with_distance=False, brute_force=True)
        assert a.colliding == b.colliding and a.instance == b.instance


def _cloud(points, ids):
    return PointCloud(np.asarray(points, dtype=float), np.asarray(ids))


def test_voxelize_examples(rng):
    assert len(voxelize_scene(PointCloud.empty())) == 0
    # 40 points spread one per cell: exactly 40 occupied cells
    pts = (np.arange(40)[:, None] * [0.02, 0.0, 0.0]) + 0.01
    grid = voxelize_scene(_cloud(pts, np.ones(40)), points_per_object=100)
    assert len(grid) == 40
    # cells are quantized with centers at origin + (i + 0.5) * size
    assert np.allclose(grid.centers[:, 1:], 0.01)
    back = VoxelGrid.from_json(grid.to_json())
    assert np.array_equal(back.occupied, grid.occupied)


def test_voxelize_excludes_target_and_table(rng):
    pts = rng.uniform(0, 0.2, (300, 3))
    ids = np.repeat([0, 1, 2], 100)
    grid = voxelize_scene(_cloud(pts, ids), exclude_target=True, target_id=1)
    kept = {tuple(c) for c in grid.index_of(pts[200:])}
    assert {tuple(c) for c in grid.occupied} == kept


def test_voxel_collision_examples(gripper):
    empty = VoxelGrid(0.02, np.zeros((0, 3), dtype=np.int64), np.zeros(3))
    g = Pose.from_translation([0.0, 0.0, 0.0])
    assert not voxel_collision(gripper, g, empty)
    # occupied cell right at the palm centre
    grid = voxelize_scene(_cloud([[0.0, 0.0, 0.055]], [3]))
    assert voxel_collision(gripper, g, grid)
    assert not voxel_collision(gripper, Pose.from_translation([1.0, 0.0, 0.0]), grid)


def test_soft_score_values(gripper):
    assert soft_score_from_evidence(0, 0.0) == 0.0
    g = Pose.identity()
    assert soft_collision_score(gripper, g, PointCloud.empty()) == 0.0
    far = _cloud([[1.0, 1.0, 1.0]], [2])
    assert soft_collision_score(gripper, g, far) == 0.0
    inside = _cloud([[0.0, 0.0, 0.055]], [2])
    assert soft_collision_score(gripper, g, inside) == pytest.approx(ONE_POINT_INSIDE, abs=1e-12)
    assert soft_collision_score(gripper, g, inside, target_id=2) == 0.0
    flagged = PointCloud(inside.points, [-1], [1])
    assert soft_collision_score(gripper, g, flagged) == 0.0


def test_soft_score_grows_toward_a_wall(gripper):
    ys, zs = np.meshgrid(np.linspace(-0.05, 0.05, 11), np.linspace(0.0, 0.12, 13))
    wall = np.column_stack([np.zeros(ys.size), ys.ravel(), zs.ravel()])
    cloud = _cloud(wall, np.full(len(wall), 2))
    prev = -1.0
    # approach the wall from +x: the finger at x = +0.05 reaches it first
    for x in np.linspace(-0.12, 0.0, 61):
        s = soft_collision_score(gripper, Pose.from_translation([x, 0.0, 0.0]), cloud)
        assert s >= prev - 1e-12
        prev = s
    assert prev > 0.5


def test_soft_params_shape(gripper):
    p = SoftCollisionParams(clearance=0.02, slope=4.0, midpoint=1.0)
    near = _cloud([[0.0, 0.0, -0.01]], [2])
    loose = soft_collision_score(gripper, Pose.identity(), near)
    wide = soft_collision_score(gripper, Pose.identity(), near, params=p)
    assert loose == 0.0 and wide > 0.0
