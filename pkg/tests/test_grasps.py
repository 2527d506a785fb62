import numpy as np
import pytest
from scipy import stats

from graspclutter.assets import make_box, make_hollow_box
from graspclutter.collision import collides_with_instance, exact_collision
from graspclutter.geometry import PointCloud, Pose, grasp_distance
from graspclutter.grasps import (
    Grasp,
    GraspLabel,
    GraspSet,
    GraspSource,
    Quality,
    WorkspaceSaturatedError,
    free_space_grasps,
    generate_reference_set,
    hard_negatives,
    is_too_far,
    label_grasp,
    perturb,
    reference_positives,
    surface_normal_sampler,
)
from graspclutter.scene import Scene

from conftest import lone_box_scene, side_grasp


def test_label_invariants():
    with pytest.raises(ValueError):
        GraspLabel(Quality.POSITIVE, False, GraspSet.G_HARD_NEGATIVE)
    with pytest.raises(ValueError):
        GraspLabel(Quality.NEGATIVE, True, GraspSet.G_FREE)
    assert Grasp(Pose.identity(), "perturbed").source is GraspSource.PERTURBED


def test_sampler_on_flat_patch(rng):
    xy = rng.uniform(-0.05, 0.05, (50, 2))
    patch = PointCloud(np.column_stack([xy, np.full(50, 0.1)]), np.ones(50), normals=np.tile([0, 0, 1.0], (50, 1)))
    gs = surface_normal_sampler(patch, 30, standoff_range=(0.09, 0.09), rng=rng)
    assert len(gs) == 30
    for g in gs:
        assert g.pose.translation[2] == pytest.approx(0.19, abs=1e-12)
        assert np.allclose(g.pose.approach, [0, 0, -1], atol=1e-12)
    assert surface_normal_sampler(patch, 0, rng=rng) == []


def test_sampler_on_sphere_points_at_center(rng):
    d = rng.normal(size=(300, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    sphere = PointCloud(0.05 * d + [0.1, 0.2, 0.3], np.ones(300), normals=d)
    for g in surface_normal_sampler(sphere, 100, rng=rng):
        o, a = g.pose.translation, g.pose.approach
        v = np.array([0.1, 0.2, 0.3]) - o
        assert np.linalg.norm(v - np.dot(v, a) * a) < 1e-3


def test_perturb_bounds(gripper, rng):
    g = side_grasp()
    assert perturb(g, 0.0, 0.0, rng).pose.allclose(g)
    for _ in range(50):
        assert grasp_distance(g, perturb(g, 0.01, 0.0, rng).pose, gripper) <= 0.01 + 1e-12


def test_perturb_translation_magnitudes_uniform(rng):
    g = Pose.identity()
    norms = np.array([np.linalg.norm(perturb(g, 0.02, 0.0, rng).pose.translation) for _ in range(10_000)])
    assert stats.kstest(norms / 0.02, "uniform").statistic < 0.05


def test_reference_set_on_lone_box(gripper, rng):
    scene = lone_box_scene(camera=False)
    ref = generate_reference_set(scene, 1, 500, rng, gripper)
    assert len(ref) == 500
    pos = reference_positives(ref)
    assert len(pos) >= 1
    for g, lab in ref[:60]:
        assert label_grasp(g, scene, 1, gripper) == lab


def test_encased_target_has_no_collision_free_positives(gripper, rng):
    shell = make_hollow_box([0.08, 0.08, 0.08], 0.01)
    inner = make_box([0.04, 0.04, 0.04])
    scene = Scene((), 0.0, (0.2, 0.2)).with_placement(shell, shell.stable_poses[0][0], 1)
    scene = scene.with_placement(inner, Pose.from_translation([0, 0, 0.01]) @ inner.stable_poses[0][0], 2)
    ref = generate_reference_set(scene, 2, 100, rng, gripper)
    assert reference_positives(ref) == []


def test_hard_negatives(gripper, rng):
    scene = lone_box_scene(camera=False)
    samples = scene.placement(1).surface_samples
    positives = reference_positives(generate_reference_set(scene, 1, 300, rng, gripper))
    assert hard_negatives(positives, samples, scene, 1, gripper, rng=rng, max_translation=0.0, max_rotation=0.0) == []
    lifted = Grasp(Pose.from_translation([0, 0, 0.5]) @ positives[0].pose)
    assert is_too_far(lifted, samples, gripper)
    out = hard_negatives(positives, samples, scene, 1, gripper, rng=rng, per_positive=3)
    assert out
    for g in out:
        assert collides_with_instance(gripper, g.pose, scene, 1) or is_too_far(g, samples, gripper)


def test_free_space_grasps(gripper, rng):
    empty = Scene((), 0.0, (0.2, 0.2))
    assert free_space_grasps(empty, 0, rng, gripper) == []
    scene = lone_box_scene(camera=False)
    gs = free_space_grasps(scene, 25, rng, gripper)
    assert len(gs) == 25
    assert not any(exact_collision(gripper, g.pose, scene, with_distance=False).colliding for g in gs)
    wall = make_box([2.0, 2.0, 2.0])
    full = Scene((), 0.0, (0.2, 0.2)).with_placement(wall, wall.stable_poses[0][0], 1)
    with pytest.raises(WorkspaceSaturatedError):
        free_space_grasps(full, 3, rng, gripper, max_attempts=20)
