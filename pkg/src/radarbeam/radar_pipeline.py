"""Polar radar scan -> sparse set of oriented surface points.

Three stages: conservative k-strongest filtering per azimuth, grid
downsampling, and covariance-based surface normal estimation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spatial import SpatialHashGrid

RSCN_MAGIC = b"RSCN"
RSCN_VERSION = 1
_RSCN_HEADER = struct.Struct("<4sHIIdQ")


class ScanFormatError(ValueError):
    """Raised for unreadable or corrupt RSCN files."""


@dataclass
class RadarScan:
    """Polar intensity grid, azimuth-major: ``intensities[azimuth, range_bin]``.

    Azimuth row ``a`` points at ``2*pi*a/azimuth_count`` in the sensor frame
    (x forward, counter-clockwise positive).
    """

    intensities: np.ndarray
    range_resolution: float
    timestamp_ns: int = 0

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"intensities must be a non-empty 2-D grid, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
                raise ValueError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        if not self.range_resolution > 0:
            raise ValueError("range_resolution must be positive")
        self.intensities = arr

    @property
    def azimuth_count(self) -> int:
        return self.intensities.shape[0]

    @property
    def range_bin_count(self) -> int:
        return self.intensities.shape[1]


def write_scan(path, scan: RadarScan) -> None:
    header = _RSCN_HEADER.pack(
        RSCN_MAGIC,
        RSCN_VERSION,
        scan.azimuth_count,
        scan.range_bin_count,
        float(scan.range_resolution),
        int(scan.timestamp_ns),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(scan.intensities, dtype=np.uint8).tobytes())


def read_scan(path) -> RadarScan:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _RSCN_HEADER.size:
        raise ScanFormatError(f"{path}: truncated header")
    magic, version, n_az, n_bins, res, ts = _RSCN_HEADER.unpack_from(data)
    if magic != RSCN_MAGIC:
        raise ScanFormatError(f"{path}: bad magic {magic!r}")
    if version != RSCN_VERSION:
        raise ScanFormatError(f"{path}: unsupported version {version}")
    if n_az == 0 or n_bins == 0 or not (res > 0):
        raise ScanFormatError(f"{path}: invalid grid metadata")
    body = data[_RSCN_HEADER.size:]
    if len(body) != n_az * n_bins:
        raise ScanFormatError(
            f"{path}: expected {n_az * n_bins} intensity bytes, found {len(body)}"
        )
    grid = np.frombuffer(body, dtype=np.uint8).reshape(n_az, n_bins)
    return RadarScan(grid, res, ts)


def list_scans(scan_dir) -> list[Path]:
    """Scan files of a sequence directory, in lexicographic order."""
    return sorted(p for p in Path(scan_dir).iterdir() if p.suffix == ".rscn")


@dataclass
class OdometryConfig:
    k_strongest: int = 3
    kappa_min: int = 55
    d_D: float = 3.5
    f_D: float = 1.0
    theta_tol_deg: float = 30.0
    huber_delta: float = 0.1
    range_min: float = 5.0
    range_max: float = 100.0
    min_neighbors: int = 3
    min_correspondences: int = 10
    max_outer_iterations: int = 50
    pose_tol: float = 1e-6
    grad_tol: float = 1e-6

    def __post_init__(self):
        if self.k_strongest < 1:
            raise ValueError("k_strongest must be >= 1")
        if not 0 <= self.kappa_min <= 255:
            raise ValueError("kappa_min must lie in [0, 255]")
        if not (self.d_D > 0 and self.f_D > 0):
            raise ValueError("d_D and f_D must be positive")
        if not 0 <= self.range_min < self.range_max:
            raise ValueError("need 0 <= range_min < range_max")
        if not 0 < self.theta_tol_deg <= 180:
            raise ValueError("theta_tol_deg must lie in (0, 180]")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if self.min_neighbors < 2:
            raise ValueError("min_neighbors must be >= 2 (sample covariance)")
        if self.min_correspondences < 3:
            raise ValueError("min_correspondences must be >= 3")

    @property
    def theta_tol(self) -> float:
        return math.radians(self.theta_tol_deg)

    @property
    def cell_size(self) -> float:
        return self.d_D / self.f_D


@dataclass
class FilteredCloud:
    points: np.ndarray
    intensities: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    azimuth_index: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    bin_index: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class DownsampledCloud:
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class SurfaceRepresentation:
    """Oriented surface points: means ``mu`` (n, 2) and unit ``normals`` (n, 2)."""

    mu: np.ndarray
    normals: np.ndarray
    neighbor_counts: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.mu)

    @classmethod
    def empty(cls) -> SurfaceRepresentation:
        return cls(np.empty((0, 2)), np.empty((0, 2)), np.empty(0, np.int64))


def polar_to_cartesian(azimuth_index, bin_index, scan: RadarScan) -> np.ndarray:
    """Centre of polar cell (azimuth, bin) in sensor-frame Cartesian metres.

    Accepts scalars or equal-length index arrays; returns shape (2,) or (n, 2).
    """
    az = np.asarray(azimuth_index)
    b = np.asarray(bin_index)
    if np.any(az < 0) or np.any(az >= scan.azimuth_count):
        raise IndexError("azimuth index out of range")
    if np.any(b < 0) or np.any(b >= scan.range_bin_count):
        raise IndexError("range bin index out of range")
    rng = (b + 0.5) * scan.range_resolution
    ang = 2.0 * np.pi * az / scan.azimuth_count
    return np.stack([rng * np.cos(ang), rng * np.sin(ang)], axis=-1)


def k_strongest_filter(scan: RadarScan, cfg: OdometryConfig) -> FilteredCloud:
    """Keep, per azimuth, the K strongest in-range bins exceeding ``kappa_min``.

    Equal intensities are ordered nearer bin first.
    """
    grid = scan.intensities
    n_az, n_bins = grid.shape
    centres = (np.arange(n_bins) + 0.5) * scan.range_resolution
    gate = (centres >= cfg.range_min) & (centres <= cfg.range_max)

    # unique per-row key: intensity first, then nearer bin wins ties
    key = grid.astype(np.int32) * n_bins + (n_bins - 1 - np.arange(n_bins, dtype=np.int32))
    eligible = gate & (grid > cfg.kappa_min)
    key = np.where(eligible, key, -1)

    k = min(cfg.k_strongest, n_bins)
    if k < n_bins:
        top = np.argpartition(key, n_bins - k, axis=1)[:, n_bins - k:]
    else:
        top = np.broadcast_to(np.arange(n_bins), (n_az, n_bins))
    top_keys = np.take_along_axis(key, top, axis=1)
    order = np.argsort(-top_keys, axis=1)
    top = np.take_along_axis(top, order, axis=1)
    top_keys = np.take_along_axis(top_keys, order, axis=1)

    az_idx = np.broadcast_to(np.arange(n_az)[:, None], top.shape)
    valid = top_keys >= 0
    az_idx = az_idx[valid]
    bins = top[valid]
    pts = polar_to_cartesian(az_idx, bins, scan) if len(bins) else np.empty((0, 2))
    return FilteredCloud(
        points=pts.reshape(-1, 2),
        intensities=grid[az_idx, bins],
        azimuth_index=az_idx.astype(np.int64),
        bin_index=bins.astype(np.int64),
    )


def downsample(cloud: FilteredCloud, cfg: OdometryConfig) -> DownsampledCloud:
    """Replace the points of every occupied grid cell by their centroid.

    Cells have side ``d_D / f_D`` and are anchored at the sensor origin.
    Output is ordered by cell index.
    """
    pts = np.asarray(cloud.points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return DownsampledCloud(np.empty((0, 2)))
    cells = np.floor(pts / cfg.cell_size).astype(np.int64)
    _, inv, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    sums = np.zeros((len(counts), 2))
    np.add.at(sums, inv, pts)
    return DownsampledCloud(sums / counts[:, None])


def estimate_surface_points(
    down: DownsampledCloud, filtered: FilteredCloud, cfg: OdometryConfig
) -> SurfaceRepresentation:
    """Fit an oriented surface point around every downsampled point.

    Neighbours are filtered points within ``d_D``; the normal is the
    eigenvector of their sample covariance with the smallest eigenvalue,
    flipped to face the sensor origin.
    """
    if len(down) == 0 or len(filtered) == 0:
        return SurfaceRepresentation.empty()
    src = np.asarray(filtered.points, dtype=float)
    grid = SpatialHashGrid(src, cfg.d_D)
    qi, pj, _ = grid.pairs_within(down.points, cfg.d_D)

    n = len(down)
    counts = np.bincount(qi, minlength=n)
    ok = counts >= cfg.min_neighbors
    if not ok.any():
        return SurfaceRepresentation.empty()

    nb = src[pj]
    sums = np.zeros((n, 2))
    np.add.at(sums, qi, nb)
    safe = np.maximum(counts, 1)[:, None]
    mu = sums / safe
    dev = nb - mu[qi]
    cov = np.zeros((n, 2, 2))
    np.add.at(cov, qi, dev[:, :, None] * dev[:, None, :])
    cov /= np.maximum(counts - 1, 1)[:, None, None]

    trace = cov[:, 0, 0] + cov[:, 1, 1]
    ok &= trace > 1e-18
    mu, cov, counts = mu[ok], cov[ok], counts[ok]
    if len(mu) == 0:
        return SurfaceRepresentation.empty()

    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    normals = canonicalize_normals(normals, mu)
    return SurfaceRepresentation(mu, normals, counts)


def canonicalize_normals(normals: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Flip each normal so that it points towards the sensor origin."""
    dot = np.einsum("ij,ij->i", normals, mu)
    flip = dot > 0
    # exactly perpendicular to the line of sight: fall back to a fixed half-plane
    tie = dot == 0
    flip |= tie & ((normals[:, 0] < 0) | ((normals[:, 0] == 0) & (normals[:, 1] < 0)))
    out = normals.copy()
    out[flip] *= -1.0
    return out


def extract_surface(scan: RadarScan, cfg: OdometryConfig) -> SurfaceRepresentation:
    """Run filtering, downsampling and surface estimation on one scan."""
    filtered = k_strongest_filter(scan, cfg)
    down = downsample(filtered, cfg)
    return estimate_surface_points(down, filtered, cfg)
