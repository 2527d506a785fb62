"""Run configuration: one declarative document covering every tunable default."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assets import HELDOUT_SEED
from .collision import SoftCollisionParams
from .geometry import GripperModel, make_gripper
from .scoring import CascadeConfig

CONFIG_ENV = "GRASPCLUTTER_CONFIG"


@dataclass(frozen=True)
class GripperConfig:
    jaw_width: float = 0.08
    finger_length: float = 0.0475
    finger_thickness: float = 0.01
    depth: float = 0.02
    palm_height: float = 0.02
    stem_length: float = 0.045

    def build(self) -> GripperModel:
        return make_gripper(**dataclasses.asdict(self))


@dataclass(frozen=True)
class SceneConfig:
    library_size: int = 15
    library_seed: int = HELDOUT_SEED
    n_objects_min: int = 5
    n_objects_max: int = 10
    table_extent: tuple[float, float] = (0.15, 0.15)
    table_height: float = 0.0
    max_attempts: int = 50
    resolution: tuple[int, int] = (200, 150)
    depth_noise: float = 0.0
    flip_prob: float = 0.0
    merge_prob: float = 0.0
    boundary_band: float = 0.005
    crop_box: float = 0.4
    crop_noise: float = 0.02
    crop_points: int = 4096
    min_target_points: int = 40


@dataclass(frozen=True)
class CollisionConfig:
    clearance: float = 0.01
    slope: float = 2.0
    midpoint: float = 1.0
    voxel_size: float = 0.02
    voxel_points_per_object: int = 100

    @property
    def soft(self) -> SoftCollisionParams:
        return SoftCollisionParams(self.clearance, self.slope, self.midpoint)


@dataclass(frozen=True)
class ReferenceConfig:
    n_candidates: int = 500
    coverage_radius: float = 0.02


@dataclass(frozen=True)
class BenchConfig:
    n_scenes: int = 100
    variants: tuple[str, ...] = (
        "cascaded/soft",
        "cascaded/exact",
        "cascaded/voxel",
        "cascaded/voxel_no_target",
        "cascaded/none",
        "single_stage/none",
    )
    comparisons: tuple[tuple[str, str], ...] = (
        ("cascaded/soft", "single_stage/none"),
        ("cascaded/exact", "cascaded/voxel"),
    )
    threshold_step: float = 0.01
    n_bootstrap: int = 1000
    sweep: str = "threshold"
    workers: int = 1


@dataclass(frozen=True)
class DatasetConfig:
    gripper_points: int = 128
    batch_size: int = 64
    hard_negative_translation: float = 0.02
    hard_negative_rotation_deg: float = 15.0
    far_threshold: float = 0.0
    free_per_scene: int = 20
    audit_fraction: float = 0.01


@dataclass(frozen=True)
class BlockerConfig:
    max_removals: int = 3
    n_grasps: int = 200
    threshold: float = 0.5
    rank_by: str = "robust"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    gripper: GripperConfig = field(default_factory=GripperConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    blocker: BlockerConfig = field(default_factory=BlockerConfig)

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _from_plain(cls, d, "config")

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _tupled(v):
    return tuple(_tupled(x) for x in v) if isinstance(v, list) else v


def _from_plain(cls, d, where: str):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected a mapping, got {type(d).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_plain(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _tupled(value)
    return cls(**kwargs)


def load_config(path=None) -> RunConfig:
    """Read a JSON or YAML document; without a path fall back to ``$GRASPCLUTTER_CONFIG`` or defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text) if text.strip() else {}
    return RunConfig.from_dict(data)
