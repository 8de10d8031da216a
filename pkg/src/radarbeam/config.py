"""Run configuration: five JSON sections with strict key and type checking."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelConfig
from .radar_pipeline import OdometryConfig
from .synth import RadarConfig, TrajectorySpec, WorldSpec
from .tracker import TrackerConfig

POSE_SOURCES = ("odometry", "gt-noise", "gt")


class ConfigError(ValueError):
    """Invalid configuration content."""


@dataclass
class SynthSection:
    seed: int = 0
    pose_source: str = "gt-noise"
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    world: WorldSpec = field(default_factory=WorldSpec)
    radar: RadarConfig = field(default_factory=RadarConfig)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.pose_source not in POSE_SOURCES:
            raise ValueError(f"pose_source must be one of {POSE_SOURCES}")


@dataclass
class EvalSection:
    kitti_stride: int = 10
    kitti_lengths: list = field(default_factory=lambda: [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0])
    drift_windows: int = 10

    def __post_init__(self):
        if self.kitti_stride < 1 or self.drift_windows < 1:
            raise ValueError("kitti_stride and drift_windows must be >= 1")
        if not self.kitti_lengths or min(self.kitti_lengths) <= 0:
            raise ValueError("kitti_lengths must be non-empty and positive")
        self.kitti_lengths = [float(v) for v in self.kitti_lengths]


@dataclass
class RunConfig:
    odometry: OdometryConfig = field(default_factory=OdometryConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    synth: SynthSection = field(default_factory=SynthSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data) -> RunConfig:
        return _build(cls, data, "")

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def replace(self, section: str, **changes) -> RunConfig:
        """Copy with fields of one section overridden (validated again)."""
        data = self.to_dict()
        data[section].update(changes)
        return RunConfig.from_dict(data)


def _check_type(value, default, where):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {type(value).__name__}")
    if isinstance(default, float):
        return float(value)
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        where = prefix + name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where + ".")
        else:
            kwargs[name] = _check_type(value, default, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None
