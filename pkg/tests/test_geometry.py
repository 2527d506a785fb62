import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from graspclutter.geometry import (
    InsufficientPointsError,
    Pose,
    PointCloud,
    box_mesh,
    compose,
    control_points,
    farthest_point_sample,
    grasp_distance,
    load_obj,
    load_stl,
    pairwise_grasp_distance,
    save_obj,
    save_stl,
)

unit = st.floats(-1.0, 1.0, allow_nan=False)
quat = st.tuples(unit, unit, unit, unit).filter(lambda q: np.linalg.norm(q) > 0.1)
vec = st.tuples(*(st.floats(-0.5, 0.5, allow_nan=False),) * 3)


def rz(deg, t=(0.0, 0.0, 0.0)):
    return Pose.from_axis_angle([0, 0, 1], np.radians(deg), t)


def test_quaternion_is_normalized_with_nonnegative_w():
    p = Pose([-2.0, 0.0, 0.0, 0.0], [0, 0, 0])
    assert np.allclose(p.quat, [1, 0, 0, 0])
    with pytest.raises(ValueError):
        Pose([0, 0, 0, 0], [0, 0, 0])


def test_compose_examples():
    p = Pose.from_axis_angle([1, 2, 3], 0.7, [0.1, -0.2, 0.3])
    assert compose(Pose.identity(), p).allclose(p)
    assert compose(rz(90), rz(90)).allclose(rz(180))
    assert compose(p, p.inverse()).allclose(Pose.identity())


def test_compose_applies_right_operand_first():
    a, b = rz(90), Pose.from_translation([1.0, 0.0, 0.0])
    # translate first, then rotate: (0,0,0) -> (1,0,0) -> (0,1,0)
    assert np.allclose(compose(a, b).apply([0.0, 0.0, 0.0]), [0.0, 1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(quat, vec, quat, vec, quat, vec)
def test_compose_is_associative(q1, t1, q2, t2, q3, t3):
    a, b, c = Pose(q1, t1), Pose(q2, t2), Pose(q3, t3)
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-9)


def test_matrix_round_trip():
    p = Pose.from_axis_angle([0.3, -1, 0.2], 2.1, [0.5, 0.1, -0.3])
    assert Pose.from_matrix(p.matrix).allclose(p)


def test_control_points_examples(gripper):
    assert np.allclose(control_points(Pose.identity(), gripper), gripper.control_points)
    t = np.array([0.1, -0.2, 0.3])
    assert np.allclose(control_points(Pose.from_translation(t), gripper), gripper.control_points + t)
    m = rz(90).matrix
    pt = m @ np.array([1.0, 0.0, 0.0, 1.0])
    assert np.allclose(rz(90).apply([1.0, 0.0, 0.0]), pt[:3])
    assert np.allclose(pt[:3], [0.0, 1.0, 0.0])


def test_control_points_layout(gripper):
    cp = gripper.control_points
    assert cp.shape == (7, 3)
    assert np.allclose(cp[0], 0.0)
    assert np.allclose(np.abs(cp[1:, 0]), 0.5 * gripper.jaw_width)


def test_grasp_distance_translation_and_rotation(gripper):
    g = Pose.from_axis_angle([1, 1, 0], 0.4, [0.1, 0.0, 0.2])
    assert grasp_distance(g, g, gripper) == 0.0
    shifted = Pose.from_translation([0.0, 0.03, 0.04]) @ g
    assert grasp_distance(g, shifted, gripper) == pytest.approx(0.05, abs=1e-12)
    # 10 degrees about an axis through the control-point centroid, checked point by point
    c = gripper.control_points.mean(axis=0)
    rot = Rotation.from_rotvec(np.radians(10.0) * np.array([0.0, 1.0, 0.0]))
    about_c = Pose.from_translation(c) @ Pose.from_rotation(rot) @ Pose.from_translation(-c)
    g2 = g @ about_c
    p1 = [g.matrix @ np.r_[p, 1.0] for p in gripper.control_points]
    p2 = [g2.matrix @ np.r_[p, 1.0] for p in gripper.control_points]
    expected = np.mean([np.linalg.norm(a[:3] - b[:3]) for a, b in zip(p1, p2)])
    assert grasp_distance(g, g2, gripper) == pytest.approx(expected, abs=1e-12)


def test_pairwise_distance_matches_scalar(gripper, rng):
    a = [Pose.from_rotation(Rotation.random(random_state=i), rng.normal(size=3)) for i in range(4)]
    b = [Pose.from_rotation(Rotation.random(random_state=10 + i), rng.normal(size=3)) for i in range(3)]
    d = pairwise_grasp_distance(a, b, gripper)
    assert d.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert d[i, j] == pytest.approx(grasp_distance(a[i], b[j], gripper), abs=1e-12)


def test_fps_examples():
    sq = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    assert set(farthest_point_sample(sq, 2, 0)) == {0, 3}
    assert list(farthest_point_sample(sq, 1, 2)) == [2]
    assert sorted(farthest_point_sample(sq, 4, 0)) == [0, 1, 2, 3]
    with pytest.raises(InsufficientPointsError):
        farthest_point_sample(sq, 5)


def test_fps_is_permutation_invariant(rng):
    pts = rng.random((200, 3))
    perm = rng.permutation(200)
    first = farthest_point_sample(pts, 20, 7)
    inv = np.argsort(perm)
    second = farthest_point_sample(pts[perm], 20, int(inv[7]))
    assert np.allclose(pts[first], pts[perm][second])


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0, 0]]), np.zeros(1))
    c = PointCloud(np.zeros((2, 3)), [1, 2])
    assert c.source_flag.tolist() == [0, 0]


def test_box_mesh_properties():
    m = box_mesh([0, 0, 0], [0.1, 0.2, 0.3])
    assert m.is_watertight()
    assert m.volume() == pytest.approx(0.006)
    # outward normals: the +x face normal points to +x
    c = m.corners.mean(axis=1)
    n = m.face_normals
    assert np.all(np.sum((c - [0.05, 0.1, 0.15]) * n, axis=1) > 0)


def test_mesh_file_round_trips(tmp_path):
    m = box_mesh([0, 0, 0], [0.1, 0.2, 0.3])
    save_obj(m, tmp_path / "m.obj")
    save_stl(m, tmp_path / "m.stl")
    for loaded in (load_obj(tmp_path / "m.obj"), load_stl(tmp_path / "m.stl")):
        assert loaded.volume() == pytest.approx(m.volume(), rel=1e-6)
