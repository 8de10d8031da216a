"""Command-line driver: simulate, odometry, track, eval, mc and the chained run.

Exit codes: 0 success, 2 configuration error, 3 I/O or input-data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import POSE_SOURCES, ConfigError, RunConfig
from .evaluation import PoseErrorReport, align_at_start, kitti_relative_error, pose_rmse, tracking_rmse
from .files import (
    CsvFormatError,
    read_trajectory_csv,
    write_json,
    write_timeline_csv,
    write_trajectory_csv,
    world_to_dict,
)
from .geometry import Pose2
from .odometry import RadarOdometry
from .radar_pipeline import ScanFormatError, list_scans, read_scan, write_scan
from .synth import (
    STREAM_POSE_NOISE,
    STREAM_RENDER,
    STREAM_TRACKING,
    STREAM_WORLD,
    NoiseSpec,
    generate_trajectory,
    generate_world,
    perturb_trajectory,
    render_scan,
    stream_rng,
)
from .tracker import run_tracking

log = logging.getLogger("radarbeam.cli")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
PROGRESS_EVERY = 100


class InputDataError(ValueError):
    """Input files are readable but inconsistent (e.g. slot counts differ)."""


class NumericFailure(ArithmeticError):
    pass


def slot_timestamp_ns(k: int, slot_period: float) -> int:
    return int(round(k * slot_period * 1e9))


def replicate_seed(master_seed: int, index: int) -> int:
    """Seed of Monte Carlo replicate ``index``, hashed from the master seed."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ commands


def cmd_simulate(cfg: RunConfig, out_dir) -> dict:
    """Write the world, ground truth, RSCN scans and a manifest to ``out_dir``."""
    out = Path(out_dir)
    scan_dir = out / "scans"
    scan_dir.mkdir(parents=True, exist_ok=True)
    sy = cfg.synth
    seed = sy.seed
    gt = generate_trajectory(sy.trajectory)
    world = generate_world(sy.world, stream_rng(seed, STREAM_WORLD), gt)
    stamps = [slot_timestamp_ns(k, sy.trajectory.slot_period) for k in range(len(gt))]

    write_json(out / "world.json", world_to_dict(world))
    write_trajectory_csv(out / "gt.csv", gt, stamps)
    names = []
    for k, pose in enumerate(gt):
        scan = render_scan(
            world, pose, sy.radar, stream_rng(seed, STREAM_RENDER, k),
            range_min=cfg.odometry.range_min, range_max=cfg.odometry.range_max, timestamp_ns=stamps[k],
        )
        name = f"scan_{k:06d}.rscn"
        write_scan(scan_dir / name, scan)
        names.append(name)
        if (k + 1) % PROGRESS_EVERY == 0:
            log.info("simulate: %d/%d scans", k + 1, len(gt))
    (out / "config.json").write_text(cfg.to_json())
    manifest = {
        "seed": seed,
        "config_hash": cfg.digest(),
        "slot_count": len(gt),
        "ground_truth": "gt.csv",
        "world": "world.json",
        "scans": [f"scans/{n}" for n in names],
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def cmd_odometry(scan_dir, cfg: RunConfig, out_dir) -> list[Pose2]:
    """Run scan-to-scan odometry over every RSCN file in ``scan_dir``."""
    paths = list_scans(scan_dir)
    if len(paths) < 2:
        raise InputDataError(f"{scan_dir}: need at least 2 scans, found {len(paths)}")
    odo = RadarOdometry(cfg.odometry, Pose2([0.0, 0.0], 0.0))
    for k, path in enumerate(paths):
        odo.process(read_scan(path))
        if (k + 1) % PROGRESS_EVERY == 0:
            log.info("odometry: %d/%d scans", k + 1, len(paths))
    res = odo.result
    if res.fallbacks:
        log.warning("odometry: %d registration fallbacks", res.fallbacks)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "odometry.csv", res.poses, res.timestamps_ns)
    return res.poses


def estimated_poses(gt: list[Pose2], cfg: RunConfig, seed: int, est: list[Pose2] | None = None) -> list[Pose2]:
    """Pose estimates fed to the tracker for the configured pose source."""
    source = cfg.synth.pose_source
    if source == "gt":
        return list(gt)
    if source == "gt-noise":
        noise = NoiseSpec(cfg.tracker.sigma_r, cfg.tracker.sigma_theta_deg, seed)
        return perturb_trajectory(gt, noise, stream_rng(seed, STREAM_POSE_NOISE))
    if est is None:
        raise InputDataError("pose source 'odometry' needs an estimated trajectory")
    if len(est) != len(gt):
        raise InputDataError(f"slot count mismatch: {len(est)} estimated vs {len(gt)} ground truth")
    # odometry runs in its own frame; the start pose is known
    return align_at_start(est, gt)


def track_poses(gt: list[Pose2], cfg: RunConfig, seed: int, est: list[Pose2] | None = None):
    poses = estimated_poses(gt, cfg, seed, est)
    timeline = run_tracking(gt, poses, cfg.channel, cfg.tracker, stream_rng(seed, STREAM_TRACKING))
    if not np.all(np.isfinite(timeline.s_track)):
        raise NumericFailure("tracker produced non-finite channel estimates")
    return timeline


def cmd_track(gt_csv, est_csv, cfg: RunConfig, out_dir):
    gt, _ = read_trajectory_csv(gt_csv)
    est = read_trajectory_csv(est_csv)[0] if est_csv is not None else None
    if est is not None and len(est) != len(gt):
        raise InputDataError(f"slot count mismatch: {est_csv} has {len(est)}, {gt_csv} has {len(gt)}")
    timeline = track_poses(gt, cfg, cfg.synth.seed, est)
    report = tracking_rmse(timeline)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_timeline_csv(out / "timeline.csv", timeline)
    write_json(out / "tracking_report.json", report.to_dict())
    log.info("track: reinit %.2f%%, AoD %.3f deg, AoA %.3f deg",
             report.reinit_fraction_pct, report.aod_rmse_deg, report.aoa_rmse_deg)
    return report


def evaluate_poses(est: list[Pose2], gt: list[Pose2], cfg: RunConfig) -> PoseErrorReport:
    if len(est) != len(gt):
        raise InputDataError(f"slot count mismatch: {len(est)} estimated vs {len(gt)} ground truth")
    aligned = align_at_start(est, gt)
    rx, ry, ryaw = pose_rmse(aligned, gt)
    try:
        kt, kr = kitti_relative_error(aligned, gt, cfg.eval.kitti_lengths, cfg.eval.kitti_stride)
    except ValueError as exc:
        log.warning("eval: KITTI metrics skipped (%s)", exc)
        kt = kr = math.nan
    return PoseErrorReport((rx, ry), ryaw, kt, kr)


def cmd_eval(est_csv, gt_csv, cfg: RunConfig, out_dir) -> PoseErrorReport:
    est, _ = read_trajectory_csv(est_csv)
    gt, _ = read_trajectory_csv(gt_csv)
    report = evaluate_poses(est, gt, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "pose_report.json", report.to_dict())
    return report


def _mc_replicate(args):
    cfg, gt, index = args
    seed = replicate_seed(cfg.synth.seed, index)
    return seed, tracking_rmse(track_poses(gt, cfg, seed)).to_dict()


def cmd_mc(cfg: RunConfig, replicates: int, out_dir, workers: int = 1) -> dict:
    """Independent tracking replicates with hashed seeds; reports mean and std per metric."""
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if cfg.synth.pose_source == "odometry":
        raise ConfigError("mc supports pose sources 'gt-noise' and 'gt' only")
    gt = generate_trajectory(cfg.synth.trajectory)
    jobs = [(cfg, gt, i) for i in range(replicates)]
    if workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_replicate, jobs))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_mc_replicate(job))
            log.info("mc: replicate %d/%d done", i + 1, replicates)
    keys = list(results[0][1])
    table = np.array([[r[k] for k in keys] for _, r in results])
    summary = {
        "replicates": replicates,
        "master_seed": cfg.synth.seed,
        "mean": dict(zip(keys, table.mean(axis=0))),
        "std": dict(zip(keys, table.std(axis=0, ddof=1) if replicates > 1 else np.zeros(len(keys)))),
        "runs": [{"seed": s, **r} for s, r in results],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "mc_report.json", summary)
    return summary


def cmd_run(cfg: RunConfig, out_dir) -> dict:
    """simulate, odometry, track and eval chained into one output directory."""
    out = Path(out_dir)
    cmd_simulate(cfg, out)
    cmd_odometry(out / "scans", cfg, out)
    est_csv = out / "odometry.csv" if cfg.synth.pose_source == "odometry" else None
    track = cmd_track(out / "gt.csv", est_csv, cfg, out)
    pose = cmd_eval(out / "odometry.csv", out / "gt.csv", cfg, out)
    return {"tracking": track.to_dict(), "pose": pose.to_dict()}


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--pose-source", choices=POSE_SOURCES, help="pose estimates fed to the tracker")
    common.add_argument("--innovation", choices=("ekf", "paper-literal"), help="tracker innovation form")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="radarbeam", description="Radar odometry aided mmWave beam tracking.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="render a synthetic drive")
    s = sub.add_parser("odometry", parents=[common], help="radar odometry over a scan directory")
    s.add_argument("--scans", type=Path, required=True)
    s = sub.add_parser("track", parents=[common], help="beam tracking along a trajectory")
    s.add_argument("--gt", type=Path, required=True)
    s.add_argument("--est", type=Path, help="estimated trajectory CSV (pose source 'odometry')")
    s = sub.add_parser("eval", parents=[common], help="pose error metrics")
    s.add_argument("--est", type=Path, required=True)
    s.add_argument("--gt", type=Path, required=True)
    s = sub.add_parser("mc", parents=[common], help="Monte Carlo tracking replicates")
    s.add_argument("--replicates", type=int, default=100)
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sub.add_parser("run", parents=[common], help="simulate, odometry, track and eval")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    synth = {}
    if args.seed is not None:
        synth["seed"] = args.seed
    if args.pose_source is not None:
        synth["pose_source"] = args.pose_source
    if synth:
        cfg = cfg.replace("synth", **synth)
    if args.innovation is not None:
        cfg = cfg.replace("tracker", innovation_mode=args.innovation)
    return cfg


def _dispatch(args, cfg: RunConfig) -> None:
    if args.command == "simulate":
        cmd_simulate(cfg, args.out)
    elif args.command == "odometry":
        cmd_odometry(args.scans, cfg, args.out)
    elif args.command == "track":
        if cfg.synth.pose_source == "odometry" and args.est is None:
            raise ConfigError("--est is required with pose source 'odometry'")
        est = args.est if cfg.synth.pose_source == "odometry" else None
        cmd_track(args.gt, est, cfg, args.out)
    elif args.command == "eval":
        cmd_eval(args.est, args.gt, cfg, args.out)
    elif args.command == "mc":
        cmd_mc(cfg, args.replicates, args.out, args.workers)
    elif args.command == "run":
        cmd_run(cfg, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(name)s: %(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        _dispatch(args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, ScanFormatError, CsvFormatError, InputDataError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())


__all__ = [
    "cmd_eval",
    "cmd_mc",
    "cmd_odometry",
    "cmd_run",
    "cmd_simulate",
    "cmd_track",
    "main",
    "replicate_seed",
]
