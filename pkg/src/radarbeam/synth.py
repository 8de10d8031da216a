"""Synthetic worlds, trajectories and polar radar scans for desk-scale experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle
from .radar_pipeline import RadarScan
from .spatial import SpatialHashGrid

# spawn-key namespaces for per-slot random streams
STREAM_WORLD = 0
STREAM_RENDER = 1
STREAM_POSE_NOISE = 2
STREAM_TRACKING = 3


def stream_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream, index)``; order of use does not matter."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, int(index))))


# ---------------------------------------------------------------- trajectory


@dataclass
class TrajectorySpec:
    """Vehicle path description.

    ``kind`` is ``"urban_loop"`` (closed rounded-rectangle loop with a
    chicane), ``"straight"`` or ``"arc"``. For the loop the speed is derived
    so that ``slot_count`` slots cover ``loop_length`` exactly.
    """

    kind: str = "urban_loop"
    slot_count: int = 6000
    slot_period: float = 0.25
    speed: float = 6.0
    loop_length: float = 9000.0
    turn_radius: float = 30.0
    arc_radius: float = 100.0
    start: list = field(default_factory=lambda: [0.0, 0.0])
    start_yaw_deg: float = 0.0

    def __post_init__(self):
        if self.kind not in ("urban_loop", "straight", "arc"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.slot_count < 1:
            raise ValueError("slot_count must be >= 1")
        if self.slot_period <= 0:
            raise ValueError("slot_period must be positive")
        if self.kind != "urban_loop" and self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.kind == "urban_loop" and self.loop_length <= 0:
            raise ValueError("loop_length must be positive")
        self.start = [float(v) for v in self.start]

    @property
    def step_length(self) -> float:
        if self.kind == "urban_loop":
            return self.loop_length / self.slot_count
        return self.speed * self.slot_period


class _Path:
    """Piecewise straight/circular path with arc-length parametrisation."""

    def __init__(self, start, yaw):
        self.segments = []  # (kind, length, radius_signed, p0, h0)
        self.p = np.asarray(start, dtype=float)
        self.h = float(yaw)
        self.length = 0.0

    def straight(self, length):
        self.segments.append(("s", length, 0.0, self.p.copy(), self.h, self.length))
        self.p = self.p + length * np.array([math.cos(self.h), math.sin(self.h)])
        self.length += length

    def arc(self, radius, angle):
        length = abs(radius * angle)
        k = math.copysign(1.0 / radius, angle)
        self.segments.append(("a", length, k, self.p.copy(), self.h, self.length))
        self.p, self.h = self._arc_point(self.p, self.h, k, length)
        self.length += length

    @staticmethod
    def _arc_point(p0, h0, k, s):
        h = h0 + k * s
        dx = (math.sin(h) - math.sin(h0)) / k
        dy = (math.cos(h0) - math.cos(h)) / k
        return p0 + np.array([dx, dy]), h

    def sample(self, s_values):
        starts = np.array([seg[5] for seg in self.segments])
        out = []
        for s in s_values:
            i = max(int(np.searchsorted(starts, s, side="right")) - 1, 0)
            kind, length, k, p0, h0, s0 = self.segments[i]
            ds = min(s - s0, length)
            if kind == "s":
                p = p0 + ds * np.array([math.cos(h0), math.sin(h0)])
                h = h0
            else:
                p, h = self._arc_point(p0, h0, k, ds)
            out.append(Pose2(p, h))
        return out


def _urban_loop(spec: TrajectorySpec) -> _Path:
    R = spec.turn_radius
    chicane_r, chicane_a = 250.0, math.radians(12.0)
    width = 2200.0

    def build(side):
        path = _Path(spec.start, math.radians(spec.start_yaw_deg))
        path.straight(width - 200.0)
        path.arc(R, math.pi / 2)
        path.straight(side)
        path.arc(R, math.pi / 2)
        # north edge heading west: straight, chicane out, straight, chicane back
        chicane_span = 4.0 * chicane_r * math.sin(chicane_a)
        rest = width - 2.0 * chicane_span
        path.straight(rest / 3)
        path.arc(chicane_r, chicane_a)
        path.arc(chicane_r, -chicane_a)
        path.straight(rest / 3)
        path.arc(chicane_r, -chicane_a)
        path.arc(chicane_r, chicane_a)
        path.straight(rest / 3)
        path.arc(R, math.pi / 2)
        # gentle S-bend on the west edge keeps the heading but shifts nothing net
        path.straight(side / 2 - 2.0 * 300.0 * math.sin(math.radians(8.0)))
        path.arc(300.0, math.radians(8.0))
        path.arc(300.0, math.radians(-16.0))
        path.arc(300.0, math.radians(8.0))
        path.straight(side / 2 - 2.0 * 300.0 * math.sin(math.radians(8.0)))
        path.arc(R, math.pi / 2)
        return path

    # the S-bend returns to its original heading with zero lateral offset, so
    # both vertical edges rise by the same amount; close the south edge exactly
    probe0, probe1 = build(1000.0), build(1100.0)
    closing0 = _closing_length(probe0, spec)
    closing1 = _closing_length(probe1, spec)
    total0 = probe0.length + closing0
    total1 = probe1.length + closing1
    slope = (total1 - total0) / 100.0
    side = 1000.0 + (spec.loop_length - total0) / slope
    if side <= 700.0:
        raise ValueError("loop_length too short for the urban loop layout")
    path = build(side)
    path.straight(_closing_length(path, spec))
    return path


def _closing_length(path: _Path, spec: TrajectorySpec) -> float:
    start = np.asarray(spec.start, dtype=float)
    h = path.h
    return float(np.dot(start - path.p, [math.cos(h), math.sin(h)]))


def generate_trajectory(spec: TrajectorySpec) -> list[Pose2]:
    """Poses at every slot; yaw is the heading of motion."""
    n = spec.slot_count
    if spec.kind == "urban_loop":
        path = _urban_loop(spec)
        step = path.length / n
    else:
        path = _Path(spec.start, math.radians(spec.start_yaw_deg))
        step = spec.speed * spec.slot_period
        total = step * max(n - 1, 1)
        if total <= 0:
            raise ValueError("degenerate trajectory")
        if spec.kind == "straight":
            path.straight(total)
        else:
            path.arc(spec.arc_radius, total / spec.arc_radius)
    return path.sample(np.arange(n) * step)


def trajectory_length(poses: list[Pose2]) -> float:
    pts = np.array([p.r for p in poses])
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T))) if len(pts) > 1 else 0.0


# ---------------------------------------------------------------- world


@dataclass
class LandmarkMap:
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    point_reflectivity: np.ndarray = field(default_factory=lambda: np.empty(0))
    segments: np.ndarray = field(default_factory=lambda: np.empty((0, 2, 2)))
    segment_reflectivity: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.segments = np.asarray(self.segments, dtype=float).reshape(-1, 2, 2)
        self.point_reflectivity = np.asarray(self.point_reflectivity, dtype=float).reshape(-1)
        self.segment_reflectivity = np.asarray(self.segment_reflectivity, dtype=float).reshape(-1)
        refl = np.concatenate([self.point_reflectivity, self.segment_reflectivity])
        if refl.size and (refl.min() < 1 or refl.max() > 255):
            raise ValueError("reflectivities must lie in [1, 255]")

    @property
    def landmark_count(self) -> int:
        return len(self.points) + len(self.segments)


@dataclass
class WorldSpec:
    """Building-like rectangles and point reflectors along a route.

    ``density`` scales both structure and reflector counts; 0 gives an
    empty map.
    """

    density: float = 1.0
    building_spacing: float = 15.0
    building_offset: list = field(default_factory=lambda: [14.0, 45.0])
    building_size: list = field(default_factory=lambda: [8.0, 30.0])
    building_reflectivity: list = field(default_factory=lambda: [90.0, 255.0])
    reflectors_per_100m: float = 1.0
    reflector_offset: list = field(default_factory=lambda: [8.0, 60.0])
    reflector_reflectivity: list = field(default_factory=lambda: [60.0, 200.0])
    road_clearance: float = 8.0
    bbox: list = field(default_factory=lambda: [-200.0, -200.0, 200.0, 200.0])

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be non-negative")


def _route_samples(route: list[Pose2], spacing: float = 2.0) -> np.ndarray:
    pts = np.array([p.r for p in route])
    if len(pts) < 2:
        return pts
    seg = np.diff(pts, axis=0)
    out = [pts[:1]]
    for p, d in zip(pts[:-1], seg):
        n = max(int(math.ceil(math.hypot(*d) / spacing)), 1)
        out.append(p + d * (np.arange(1, n + 1) / n)[:, None])
    return np.concatenate(out)


def _rect_edges(centre, half, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    R = np.array([[c, -s], [s, c]])
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * half
    corners = corners @ R.T + centre
    return np.stack([corners, np.roll(corners, -1, axis=0)], axis=1)


def generate_world(spec: WorldSpec, rng: np.random.Generator, route: list[Pose2] | None = None) -> LandmarkMap:
    """Scatter structures along ``route`` (or inside ``spec.bbox`` when no route is given)."""
    if spec.density == 0:
        return LandmarkMap()

    if route is None:
        x0, y0, x1, y1 = spec.bbox
        area = (x1 - x0) * (y1 - y0)
        n_b = rng.poisson(spec.density * area / spec.building_spacing**2 / 4)
        n_p = rng.poisson(spec.density * area / 2500.0 * spec.reflectors_per_100m)
        centres = rng.uniform([x0, y0], [x1, y1], size=(n_b, 2))
        yaws = rng.uniform(0, math.pi, n_b)
        pts = rng.uniform([x0, y0], [x1, y1], size=(n_p, 2))
        return _assemble(spec, rng, centres, yaws, pts, None)

    poses = route
    dense = _route_samples(poses)
    length = trajectory_length(poses) if len(poses) > 1 else 0.0
    n_b = max(int(spec.density * length / spec.building_spacing), 1)
    n_p = int(spec.density * length / 100.0 * spec.reflectors_per_100m)

    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(dense, axis=0).T))])

    def place(count, offsets):
        s = rng.uniform(0, arc[-1], count)
        idx = np.clip(np.searchsorted(arc, s), 1, len(dense) - 1)
        tang = dense[idx] - dense[idx - 1]
        tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-12)
        nrm = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
        side = rng.choice([-1.0, 1.0], count)
        off = rng.uniform(offsets[0], offsets[1], count) * side
        heading = np.arctan2(tang[:, 1], tang[:, 0])
        return dense[idx] + nrm * off[:, None], heading

    centres, heading = place(n_b, spec.building_offset)
    yaws = heading + rng.normal(0.0, math.radians(10.0), n_b)
    pts, _ = place(n_p, spec.reflector_offset)
    return _assemble(spec, rng, centres, yaws, pts, dense)


def _assemble(spec, rng, centres, yaws, pts, dense) -> LandmarkMap:
    lo, hi = spec.building_size
    halves = rng.uniform(lo / 2, hi / 2, size=(len(centres), 2))
    brefl = rng.uniform(*spec.building_reflectivity, len(centres))
    prefl = rng.uniform(*spec.reflector_reflectivity, len(pts))

    clear = spec.road_clearance
    road = SpatialHashGrid(dense, clear) if dense is not None and len(dense) else None

    def near_road(samples):
        if road is None:
            return False
        qi, _, _ = road.pairs_within(samples, clear)
        return len(qi) > 0

    segs, seg_refl = [], []
    for c, h, y, r in zip(centres, halves, yaws, brefl):
        edges = _rect_edges(c, h, y)
        t = np.linspace(0.0, 1.0, 12)[:, None]
        samples = np.concatenate([e[0] + t * (e[1] - e[0]) for e in edges])
        if near_road(samples):
            continue
        segs.append(edges)
        seg_refl.extend([r] * 4)

    keep = np.ones(len(pts), dtype=bool)
    if road is not None and len(pts):
        qi, _, _ = road.pairs_within(pts, clear)
        keep[np.unique(qi)] = False

    segments = np.concatenate(segs) if segs else np.empty((0, 2, 2))
    return LandmarkMap(pts[keep], prefl[keep], segments, np.asarray(seg_refl))


def landmarks_near(world: LandmarkMap, route: list[Pose2], radius: float) -> int:
    """Number of landmarks with any part within ``radius`` of the route."""
    dense = _route_samples(route, spacing=radius / 4)
    grid = SpatialHashGrid(dense, radius)
    count = 0
    if len(world.points):
        qi, _, _ = grid.pairs_within(world.points, radius)
        count += len(np.unique(qi))
    if len(world.segments):
        t = np.linspace(0, 1, 9)[:, None, None]
        samples = world.segments[None, :, 0] + t * (world.segments[None, :, 1] - world.segments[None, :, 0])
        qi, _, _ = grid.pairs_within(samples.reshape(-1, 2), radius)
        count += len(np.unique(qi % len(world.segments)))
    return count


# ---------------------------------------------------------------- rendering


@dataclass
class RadarConfig:
    azimuth_count: int = 400
    range_bin_count: int = 1000
    range_resolution: float = 0.1
    noise_mean: float = 5.0
    speckle_rate: float = 2e-5
    pulse_sigma_bins: float = 1.0

    def __post_init__(self):
        if self.azimuth_count < 1 or self.range_bin_count < 1:
            raise ValueError("radar grid must be non-empty")
        if self.range_resolution <= 0 or self.pulse_sigma_bins <= 0:
            raise ValueError("range_resolution and pulse_sigma_bins must be positive")
        if self.noise_mean < 0 or self.speckle_rate < 0:
            raise ValueError("noise parameters must be non-negative")

    @property
    def max_range(self) -> float:
        return self.range_bin_count * self.range_resolution

    def noiseless(self) -> RadarConfig:
        return RadarConfig(
            self.azimuth_count, self.range_bin_count, self.range_resolution, 0.0, 0.0, self.pulse_sigma_bins
        )


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def render_scan(
    world: LandmarkMap,
    sensor_pose: Pose2,
    radar_cfg: RadarConfig,
    rng: np.random.Generator,
    range_min: float = 5.0,
    range_max: float = 100.0,
    timestamp_ns: int = 0,
) -> RadarScan:
    """Render a polar intensity scan seen from ``sensor_pose``.

    Segments are ray-cast along every azimuth row and only the first hit is
    kept; point reflectors land in their nearest row unless hidden behind a
    segment hit. Each return is a 3-bin Gaussian pulse centred on the exact
    range. Background noise is exponential and speckle adds isolated false
    returns.
    """
    A, Rb, res = radar_cfg.azimuth_count, radar_cfg.range_bin_count, radar_cfg.range_resolution
    rmax = min(range_max, radar_cfg.max_range)
    grid = np.zeros((A, Rb))
    c, s = math.cos(sensor_pose.theta), math.sin(sensor_pose.theta)
    Rt = np.array([[c, s], [-s, c]])  # world -> sensor rotation
    angles = 2.0 * np.pi * np.arange(A) / A
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    hit_range = np.full(A, np.inf)
    hit_refl = np.zeros(A)
    if len(world.segments):
        seg = world.segments
        mid = seg.mean(axis=1)
        half = 0.5 * np.hypot(*(seg[:, 1] - seg[:, 0]).T)
        near = np.hypot(*(mid - sensor_pose.r).T) <= rmax + half
        if near.any():
            p = (seg[near, 0] - sensor_pose.r) @ Rt.T
            q = (seg[near, 1] - sensor_pose.r) @ Rt.T
            e = q - p
            refl = world.segment_reflectivity[near]
            den = _cross(dirs[:, None, :], e[None, :, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = _cross(p[None, :, :], e[None, :, :]) / den
                t = _cross(p[None, :, :], dirs[:, None, :]) / den
            valid = (np.abs(den) > 1e-12) & (rho > 0) & (t >= 0) & (t <= 1)
            rho = np.where(valid, rho, np.inf)
            j = np.argmin(rho, axis=1)
            hit_range = rho[np.arange(A), j]
            hit_refl = refl[j]

    rows, ranges, refls = [], [], []
    seen = np.isfinite(hit_range) & (hit_range >= range_min) & (hit_range <= rmax)
    rows.append(np.nonzero(seen)[0])
    ranges.append(hit_range[seen])
    refls.append(hit_refl[seen])

    if len(world.points):
        rel = (world.points - sensor_pose.r) @ Rt.T
        rng_p = np.hypot(*rel.T)
        az = np.arctan2(rel[:, 1], rel[:, 0])
        row = np.round(az / (2 * np.pi) * A).astype(np.int64) % A
        vis = (rng_p >= range_min) & (rng_p <= rmax) & (rng_p < hit_range[row])
        rows.append(row[vis])
        ranges.append(rng_p[vis])
        refls.append(world.point_reflectivity[vis])

    rows = np.concatenate(rows)
    ranges = np.concatenate(ranges)
    refls = np.concatenate(refls)
    if len(rows):
        centre = ranges / res - 0.5
        nearest = np.round(centre).astype(np.int64)
        sig2 = 2.0 * radar_cfg.pulse_sigma_bins**2
        for off in (-1, 0, 1):
            b = nearest + off
            ok = (b >= 0) & (b < Rb)
            val = refls[ok] * np.exp(-((b[ok] - centre[ok]) ** 2) / sig2)
            np.maximum.at(grid, (rows[ok], b[ok]), val)

    if radar_cfg.noise_mean > 0:
        grid += rng.exponential(radar_cfg.noise_mean, size=grid.shape)
    if radar_cfg.speckle_rate > 0:
        n_sp = rng.poisson(radar_cfg.speckle_rate * A * Rb)
        if n_sp:
            idx = rng.integers(0, A * Rb, n_sp)
            grid.flat[idx] = np.maximum(grid.flat[idx], rng.uniform(60.0, 255.0, n_sp))

    scan_grid = np.clip(np.rint(grid), 0, 255).astype(np.uint8)
    return RadarScan(scan_grid, res, timestamp_ns)


# ---------------------------------------------------------------- pose noise


@dataclass
class NoiseSpec:
    sigma_r: float = 1.0
    sigma_theta_deg: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_theta_deg < 0:
            raise ValueError("noise deviations must be non-negative")


def perturb_pose(pose: Pose2, noise: NoiseSpec, rng: np.random.Generator) -> Pose2:
    """Add i.i.d. Gaussian position and yaw errors."""
    eps = rng.standard_normal(3)
    return Pose2(
        pose.r + noise.sigma_r * eps[:2],
        wrap_angle(pose.theta + math.radians(noise.sigma_theta_deg) * eps[2]),
    )


def perturb_trajectory(poses: list[Pose2], noise: NoiseSpec, rng: np.random.Generator, keep_first: bool = True) -> list[Pose2]:
    """Perturb every pose; the first stays exact when ``keep_first`` (known start pose)."""
    out = [perturb_pose(p, noise, rng) for p in poses]
    if keep_first and poses:
        out[0] = poses[0]
    return out
