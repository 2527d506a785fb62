"""Geometric cascaded 6-DOF grasp synthesis in clutter: scenes, collision checks, scoring, evaluation."""

from .geometry import GripperModel, PointCloud, Pose, TriMesh, grasp_distance, make_gripper
from .scene import Scene, load_scene, render_cloud, save_scene

__version__ = "0.1.0"

__all__ = [
    "GripperModel",
    "PointCloud",
    "Pose",
    "Scene",
    "TriMesh",
    "grasp_distance",
    "load_scene",
    "make_gripper",
    "render_cloud",
    "save_scene",
]
