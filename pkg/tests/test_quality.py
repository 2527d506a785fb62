import numpy as np
import pytest

from graspclutter.assets import make_box
from graspclutter.geometry import PointCloud, Pose
from graspclutter.quality import antipodal_score, closing_region_mask, quality_oracle, success_oracle

from conftest import lone_box_scene, side_grasp


def plate(tilt_deg=0.0, sides=(1.0, -1.0), half_y=0.008, z=(0.07, 0.11), half_width=0.005):
    """Two faces of a thin plate between the jaws of an identity-pose gripper."""
    ys, zs = np.meshgrid(np.linspace(-half_y, half_y, 5), np.linspace(*z, 9))
    pts, nrm = [], []
    t = np.radians(tilt_deg)
    for s in sides:
        face = np.column_stack([np.full(ys.size, s * half_width), ys.ravel(), zs.ravel()])
        pts.append(face)
        nrm.append(np.tile([s * np.cos(t), np.sin(t), 0.0], (ys.size, 1)))
    pts, nrm = np.concatenate(pts), np.concatenate(nrm)
    return PointCloud(pts, np.ones(len(pts)), normals=nrm)


def test_empty_region_scores_zero(gripper):
    far = plate()
    assert antipodal_score(Pose.from_translation([1.0, 0.0, 0.0]), far, gripper) == 0.0
    assert antipodal_score(Pose.identity(), PointCloud.empty(), gripper) == 0.0


def test_plate_perpendicular_to_closing_axis(gripper):
    assert antipodal_score(Pose.identity(), plate(), gripper, friction_mu=0.5) == 1.0


def test_plate_parallel_to_closing_axis(gripper):
    assert antipodal_score(Pose.identity(), plate(tilt_deg=90.0), gripper, friction_mu=0.5) == 0.0
    assert antipodal_score(Pose.identity(), plate(tilt_deg=90.0), gripper, friction_mu=0.9) == 0.0


def test_friction_cone_edge(gripper):
    # cone half-angle arctan(0.5) is about 26.6 degrees
    assert antipodal_score(Pose.identity(), plate(tilt_deg=20.0), gripper) == 1.0
    assert antipodal_score(Pose.identity(), plate(tilt_deg=30.0), gripper) == 0.0
    assert antipodal_score(Pose.identity(), plate(tilt_deg=30.0), gripper, friction_mu=0.6) == 1.0


def test_unobserved_side_mirrors_or_fails(gripper):
    one = plate(sides=(1.0,))
    assert antipodal_score(Pose.identity(), one, gripper) == 1.0
    assert antipodal_score(Pose.identity(), one, gripper, require_both_sides=True) == 0.0


def test_fingertip_graze_is_not_a_patch(gripper):
    tiny = plate(half_y=0.002, z=(0.108, 0.111))
    assert antipodal_score(Pose.identity(), tiny, gripper) == 0.0


def test_points_inside_body_score_zero(gripper):
    p = plate()
    palm = PointCloud(np.vstack([p.points, [[0.0, 0.0, 0.05]]]), np.ones(len(p) + 1), normals=np.vstack([p.normals, [[0, 0, 1.0]]]))
    assert antipodal_score(Pose.identity(), palm, gripper) == 0.0


def test_normals_required(gripper):
    with pytest.raises(ValueError):
        antipodal_score(Pose.identity(), PointCloud(np.zeros((1, 3)), [1]), gripper)


def test_closing_region_mask(gripper):
    pts = np.array([[0.0, 0.0, 0.08], [0.0, 0.0, 0.2], [0.045, 0.0, 0.08]])
    assert closing_region_mask(Pose.identity(), pts, gripper).tolist() == [True, False, False]
    assert closing_region_mask(Pose.identity(), pts, gripper, margin=0.01).tolist() == [True, False, True]


def test_success_oracle_examples(gripper):
    scene = lone_box_scene(camera=False)
    g = side_grasp()
    assert success_oracle(g, scene, 1, gripper)
    assert not success_oracle(Pose.from_translation([0.5, 0.5, 0.3]), scene, 1, gripper)
    # a neighbour standing where the +x finger goes
    post = make_box([0.01, 0.01, 0.15])
    crowded = scene.with_placement(post, Pose.from_translation([0.045, 0.0, 0.0]) @ post.stable_poses[0][0], 2)
    assert not success_oracle(g, crowded, 1, gripper)
    assert quality_oracle(g, crowded, 1, gripper)
