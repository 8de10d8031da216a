"""Sequential scan-to-scan radar odometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from .geometry import Pose2, RelativePose, apply_relative
from .radar_pipeline import OdometryConfig, RadarScan, SurfaceRepresentation, extract_surface
from .registration import RegistrationResult, register

log = logging.getLogger(__name__)


@dataclass
class OdometryResult:
    poses: list[Pose2] = field(default_factory=list)
    timestamps_ns: list[int] = field(default_factory=list)
    registrations: list[RegistrationResult] = field(default_factory=list)
    fallbacks: int = 0


class RadarOdometry:
    """Chain scan-to-scan registrations into absolute poses.

    Each scan is registered against its predecessor only. The previous
    relative motion is used as the initial guess (constant velocity) and as
    the fallback when registration fails.
    """

    def __init__(self, cfg: OdometryConfig | None = None, start_pose: Pose2 | None = None):
        self.cfg = cfg or OdometryConfig()
        self.start_pose = start_pose or Pose2([0.0, 0.0], 0.0)
        self.reset()

    def reset(self) -> None:
        self.result = OdometryResult()
        self._prev: SurfaceRepresentation | None = None
        self._velocity = RelativePose.identity()

    @property
    def pose(self) -> Pose2 | None:
        return self.result.poses[-1] if self.result.poses else None

    def process(self, scan: RadarScan) -> Pose2:
        rep = extract_surface(scan, self.cfg)
        res = self.result
        if self._prev is None:
            pose = self.start_pose
        else:
            reg = register(self._prev, rep, self._velocity, self.cfg)
            res.registrations.append(reg)
            if reg.failed:
                res.fallbacks += 1
                log.warning(
                    "registration failed at scan %d (%d correspondences); using motion prior",
                    len(res.poses), reg.correspondences_used,
                )
                delta = self._velocity
            else:
                delta = reg.estimated
            self._velocity = delta
            pose = apply_relative(res.poses[-1], delta)
        res.poses.append(pose)
        res.timestamps_ns.append(int(scan.timestamp_ns))
        self._prev = rep
        return pose


def run_odometry(scans: Iterable[RadarScan], cfg: OdometryConfig | None = None, start_pose: Pose2 | None = None) -> OdometryResult:
    odo = RadarOdometry(cfg, start_pose)
    for scan in scans:
        odo.process(scan)
    return odo.result
