"""Pose and beam-tracking error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Pose2, compose, inverse, wrap_angle

KITTI_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


@dataclass
class PoseErrorReport:
    rmse_xy: tuple[float, float]
    rmse_yaw: float
    kitti_trans_pct: float
    kitti_rot_deg_per_m: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rmse_xy"] = list(self.rmse_xy)
        return d


@dataclass
class TrackingErrorReport:
    gain_mag_rmse_pct: float
    aod_rmse_deg: float
    aoa_rmse_deg: float
    reinit_fraction_pct: float

    def to_dict(self) -> dict:
        return asdict(self)


def _as_array(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        return np.asarray(poses, dtype=float).reshape(-1, 3)
    return np.array([[p.x, p.y, p.theta] for p in poses], dtype=float).reshape(-1, 3)


def _check_lengths(est, gt):
    if len(est) != len(gt):
        raise ValueError(f"trajectory length mismatch: {len(est)} vs {len(gt)}")
    if len(est) == 0:
        raise ValueError("empty trajectory")


def align_at_start(est: list[Pose2], gt: list[Pose2]) -> list[Pose2]:
    """Rigidly move ``est`` so its first pose coincides with the first of ``gt``."""
    _check_lengths(est, gt)
    T = compose(gt[0].to_transform(), inverse(est[0].to_transform()))
    return [compose(T, p.to_transform()).to_pose() for p in est]


def pose_rmse(est, gt) -> tuple[float, float, float]:
    """Per-axis position RMSE (m) and yaw RMSE (deg, shortest-arc differences)."""
    e, g = _as_array(est), _as_array(gt)
    _check_lengths(e, g)
    d = e[:, :2] - g[:, :2]
    yaw = wrap_angle(e[:, 2] - g[:, 2])
    rx, ry = np.sqrt(np.mean(d**2, axis=0))
    return float(rx), float(ry), float(np.degrees(np.sqrt(np.mean(yaw**2))))


def _relative(arr, i, j):
    """Relative transforms ``T_i^-1 T_j`` for index arrays: (dx, dy, dtheta)."""
    c, s = np.cos(arr[i, 2]), np.sin(arr[i, 2])
    d = arr[j, :2] - arr[i, :2]
    return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], arr[j, 2] - arr[i, 2]], axis=1)


def kitti_relative_error(est, gt, lengths=KITTI_LENGTHS, stride: int = 10) -> tuple[float, float]:
    """Average relative error over fixed-length subsequences.

    For every start slot (every ``stride`` slots) and every length ``L``, the
    subsequence ends at the first slot whose ground-truth path length from
    the start reaches ``L``. Returns (translation error in %, rotation
    error in deg/m).
    """
    e, g = _as_array(est), _as_array(gt)
    _check_lengths(e, g)
    step = np.hypot(*np.diff(g[:, :2], axis=0).T) if len(g) > 1 else np.empty(0)
    dist = np.concatenate([[0.0], np.cumsum(step)])
    if dist[-1] < min(lengths):
        raise ValueError(f"trajectory too short for KITTI evaluation ({dist[-1]:.1f} m)")

    firsts, lasts, ls = [], [], []
    starts = np.arange(0, len(g), stride)
    for L in lengths:
        last = np.searchsorted(dist, dist[starts] + L - 1e-9)
        ok = last < len(g)
        firsts.append(starts[ok])
        lasts.append(last[ok])
        ls.append(np.full(ok.sum(), L))
    i = np.concatenate(firsts)
    j = np.concatenate(lasts)
    L = np.concatenate(ls)

    dg = _relative(g, i, j)
    de = _relative(e, i, j)
    # error transform inv(de) * dg
    c, s = np.cos(de[:, 2]), np.sin(de[:, 2])
    dx = dg[:, 0] - de[:, 0]
    dy = dg[:, 1] - de[:, 1]
    tx = c * dx + s * dy
    ty = -s * dx + c * dy
    t_err = np.hypot(tx, ty) / L
    r_err = np.abs(wrap_angle(dg[:, 2] - de[:, 2])) / L
    return float(np.mean(t_err) * 100.0), float(np.degrees(np.mean(r_err)))


def pose_error_report(est, gt) -> PoseErrorReport:
    """Start-aligned RMSE plus KITTI metrics (KITTI left NaN on short runs)."""
    aligned = align_at_start(list(est), list(gt))
    rx, ry, ryaw = pose_rmse(aligned, gt)
    try:
        kt, kr = kitti_relative_error(aligned, gt)
    except ValueError:
        kt, kr = math.nan, math.nan
    return PoseErrorReport((rx, ry), ryaw, kt, kr)


def tracking_rmse(timeline) -> TrackingErrorReport:
    """Relative gain RMSE (%), AoD/AoA RMSE (deg) and re-initialisation share (%)."""
    s_true = np.asarray(timeline.s_true)
    s_track = np.asarray(timeline.s_track)
    if len(s_true) == 0:
        raise ValueError("empty timeline")
    rel = (s_track[:, 0] - s_true[:, 0]) / s_true[:, 0] * 100.0
    aod = wrap_angle(s_track[:, 1] - s_true[:, 1])
    aoa = wrap_angle(s_track[:, 2] - s_true[:, 2])
    return TrackingErrorReport(
        gain_mag_rmse_pct=float(np.sqrt(np.mean(rel**2))),
        aod_rmse_deg=float(np.degrees(np.sqrt(np.mean(aod**2)))),
        aoa_rmse_deg=float(np.degrees(np.sqrt(np.mean(aoa**2)))),
        reinit_fraction_pct=float(np.count_nonzero(timeline.reinit) / len(s_true) * 100.0),
    )


def position_errors(est, gt) -> np.ndarray:
    e, g = _as_array(est), _as_array(gt)
    _check_lengths(e, g)
    return np.hypot(*(e[:, :2] - g[:, :2]).T)


def windowed_means(values, windows: int) -> np.ndarray:
    """Means over ``windows`` contiguous, near-equal chunks."""
    values = np.asarray(values, dtype=float)
    if windows < 1 or windows > len(values):
        raise ValueError("need 1 <= windows <= len(values)")
    return np.array([c.mean() for c in np.array_split(values, windows)])


__all__ = [
    "PoseErrorReport",
    "TrackingErrorReport",
    "align_at_start",
    "kitti_relative_error",
    "pose_error_report",
    "pose_rmse",
    "position_errors",
    "tracking_rmse",
    "windowed_means",
]
