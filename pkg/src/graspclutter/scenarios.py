"""Hand-built scenes with a known answer: a blocked target, and geometry hidden from the camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import make_box, make_cylinder
from .geometry import Pose
from .scene import CameraModel, Scene


@dataclass(frozen=True)
class BlockedScene:
    scene: Scene
    target: int
    blocker: int
    distractor: int


def _frame(yaw: float, origin) -> Pose:
    return Pose.from_axis_angle([0.0, 0.0, 1.0], yaw, [origin[0], origin[1], 0.0])


def blocked_target_scene(rng: np.random.Generator, gap: float = 0.008, resolution=(200, 150)) -> BlockedScene:
    """A low bar lying on the table with a taller block standing just beside it.

    The bar is only graspable across its width, which puts one finger where
    the block stands; any closing direction with a vertical component drives
    a jaw into the table. The camera looks from the free side so the block's
    top and inner face above the bar stay visible. A distractor sits well away.
    """
    width = rng.uniform(0.03, 0.035)
    target = make_box([width, rng.uniform(0.11, 0.13), rng.uniform(0.04, 0.045)])
    bx = rng.uniform(0.045, 0.055)
    blocker = make_box([bx, rng.uniform(0.15, 0.17), rng.uniform(0.09, 0.11)])
    distractor = make_cylinder(rng.uniform(0.02, 0.03), rng.uniform(0.06, 0.1))

    yaw = rng.uniform(0.0, 2.0 * np.pi)
    frame = _frame(yaw, rng.uniform(-0.03, 0.03, 2))
    rest = lambda asset: asset.stable_poses[0][0]  # noqa: E731
    scene = Scene((), 0.0, (0.3, 0.3))
    scene = scene.with_placement(target, frame @ rest(target), 1)
    off = Pose.from_translation([-(0.5 * width + gap + 0.5 * bx), 0.0, 0.0])
    scene = scene.with_placement(blocker, frame @ off @ rest(blocker), 2)
    far = Pose.from_translation([0.05, rng.choice([-1.0, 1.0]) * 0.24, 0.0])
    scene = scene.with_placement(distractor, frame @ far @ rest(distractor), 3)

    azim = rng.uniform(np.radians(20.0), np.radians(40.0))
    elev = rng.uniform(np.radians(40.0), np.radians(50.0))
    dist = 0.6
    local_eye = dist * np.array([np.cos(elev) * np.cos(azim), np.cos(elev) * np.sin(azim), np.sin(elev)])
    camera = CameraModel.looking_at(frame.apply(local_eye), frame.apply([0.0, 0.0, 0.03]), *resolution)
    return BlockedScene(scene.with_camera(camera), 1, 2, 3)


@dataclass(frozen=True)
class HiddenScene:
    scene: Scene
    target: int
    hidden: int


def hidden_geometry_scene(resolution=(200, 150)) -> HiddenScene:
    """A box with a slightly shorter box right behind it, in the camera's shadow.

    The camera sees the front box's top and front face but nothing of the
    rear box, so a cloud-based check cannot know it is there; shallow top
    grasps across the front box put the far finger into it.
    """
    front = make_box([0.036, 0.08, 0.13])
    back = make_box([0.04, 0.05, 0.11])
    scene = Scene((), 0.0, (0.3, 0.3))
    scene = scene.with_placement(front, front.stable_poses[0][0], 1)
    back_pose = Pose.from_translation([-0.065, 0.0, 0.0]) @ back.stable_poses[0][0]
    scene = scene.with_placement(back, back_pose, 2)
    camera = CameraModel.looking_at([0.6, 0.0, 0.3], [0.0, 0.0, 0.07], *resolution)
    return HiddenScene(scene.with_camera(camera), 1, 2)
