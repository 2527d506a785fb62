import numpy as np
import pytest

from graspclutter.assets import make_box
from graspclutter.geometry import Pose, make_gripper
from graspclutter.scene import CameraModel, Scene


@pytest.fixture(scope="session")
def gripper():
    return make_gripper()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lone_box_scene(size=(0.04, 0.04, 0.04), camera=True):
    box = make_box(size)
    scene = Scene((), 0.0, (0.2, 0.2)).with_placement(box, box.stable_poses[0][0], 1)
    if camera:
        scene = scene.with_camera(CameraModel.looking_at([0.45, 0.2, 0.4], [0.0, 0.0, 0.02], 120, 90))
    return scene


def side_grasp(center_z=0.03, reach=0.08875, x_offset=0.0):
    """Top-down grasp closing along world x; the wrist sits ``reach`` above ``center_z``.

    The default reach puts the middle of the closing region at ``center_z``.
    """
    rot = Pose.from_axis_angle([1.0, 0.0, 0.0], np.pi).rotation
    return Pose.from_rotation(rot, [x_offset, 0.0, center_z + reach])


ACCEPTANCE_LINES = []


def record_criterion(name: str, ok: bool, detail: str) -> bool:
    """Print and remember one pass/fail line; the session summary repeats them."""
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
