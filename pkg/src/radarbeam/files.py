"""CSV and JSON artefacts shared by the command-line tools."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .geometry import Pose2

TRAJECTORY_HEADER = ("k", "t_ns", "x_m", "y_m", "theta_rad")
TIMELINE_HEADER = (
    "k", "x_gt", "y_gt", "theta_gt", "x_est", "y_est", "theta_est",
    "alpha_gt", "alpha_trk", "aod_gt", "aod_trk", "aoa_gt", "aoa_trk", "reinit",
)


class CsvFormatError(ValueError):
    """Malformed CSV content; the message carries the file and line number."""


def _num(v: float) -> str:
    # repr round-trips exactly, which keeps reruns byte-identical
    return repr(float(v))


def write_trajectory_csv(path, poses: list[Pose2], timestamps_ns: list[int]) -> None:
    if len(poses) != len(timestamps_ns):
        raise ValueError("one timestamp per pose required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for k, (p, t) in enumerate(zip(poses, timestamps_ns)):
            w.writerow([k, int(t), _num(p.x), _num(p.y), _num(p.theta)])


def read_trajectory_csv(path) -> tuple[list[Pose2], list[int]]:
    """Read a trajectory CSV; slot indices must run 0, 1, 2, ..."""
    poses, stamps = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != TRAJECTORY_HEADER:
            raise CsvFormatError(f"{path}:1: expected header {','.join(TRAJECTORY_HEADER)}")
        for line, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(TRAJECTORY_HEADER):
                raise CsvFormatError(f"{path}:{line}: expected 5 fields, got {len(row)}")
            try:
                k, t = int(row[0]), int(row[1])
                x, y, th = (float(v) for v in row[2:])
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{line}: {exc}") from None
            if not all(map(math.isfinite, (x, y, th))):
                raise CsvFormatError(f"{path}:{line}: non-finite value")
            if k != len(poses):
                raise CsvFormatError(f"{path}:{line}: slot index {k}, expected {len(poses)}")
            poses.append(Pose2([x, y], th))
            stamps.append(t)
    return poses, stamps


def write_timeline_csv(path, timeline) -> None:
    s_true, s_trk = timeline.s_true, timeline.s_track
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMELINE_HEADER)
        for k in range(len(timeline)):
            gt, est = timeline.true_poses[k], timeline.est_poses[k]
            w.writerow(
                [k, _num(gt.x), _num(gt.y), _num(gt.theta), _num(est.x), _num(est.y), _num(est.theta),
                 _num(s_true[k, 0]), _num(s_trk[k, 0]), _num(s_true[k, 1]), _num(s_trk[k, 1]),
                 _num(s_true[k, 2]), _num(s_trk[k, 2]), int(bool(timeline.reinit[k]))]
            )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def world_to_dict(world) -> dict:
    return {
        "points": world.points,
        "point_reflectivity": world.point_reflectivity,
        "segments": world.segments,
        "segment_reflectivity": world.segment_reflectivity,
    }
