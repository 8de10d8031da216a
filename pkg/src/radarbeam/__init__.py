"""Radar odometry aided mmWave beam tracking for vehicles."""

from .channel import ChannelConfig, FullChannelState, ReducedChannelState, pose_to_channel
from .config import ConfigError, RunConfig
from .evaluation import kitti_relative_error, pose_rmse, tracking_rmse
from .geometry import Pose2, RelativePose, Transform2, wrap_angle
from .odometry import RadarOdometry, run_odometry
from .radar_pipeline import OdometryConfig, RadarScan, extract_surface, read_scan, write_scan
from .registration import register
from .tracker import TrackerConfig, run_tracking, track_step

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "FullChannelState",
    "OdometryConfig",
    "Pose2",
    "RadarOdometry",
    "RadarScan",
    "ReducedChannelState",
    "RelativePose",
    "RunConfig",
    "TrackerConfig",
    "Transform2",
    "extract_surface",
    "kitti_relative_error",
    "pose_rmse",
    "pose_to_channel",
    "read_scan",
    "register",
    "run_odometry",
    "run_tracking",
    "track_step",
    "tracking_rmse",
    "wrap_angle",
    "write_scan",
]
