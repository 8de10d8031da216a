"""Line-of-sight mmWave channel between a fixed base station and the vehicle.

Conventions: the BS array axis is the world +y axis and the AoD is measured
from it, so ``aod = atan2(x, y)`` for the BS-relative vehicle position
``(x, y)``. The AoA follows from ``yaw - aod + aoa = pi``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class ChannelConfig:
    n_tx: int = 4
    n_rx: int = 4
    wavelength: float = 6e-3
    carrier_hz: float = 50e9
    spacing: float = 3e-3
    path_loss_exponent: float = 2.2
    alpha_ref_mag: float = 5e-4
    alpha_ref_arg: float = 0.0
    d0: float = 1.0
    noise_power_dbm: float = -90.0
    bs_position: list = field(default_factory=lambda: [-30.0, -125.0])

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if not (self.spacing > 0 and self.wavelength > 0 and self.d0 > 0):
            raise ValueError("spacing, wavelength and d0 must be positive")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.alpha_ref_mag < 0:
            raise ValueError("alpha_ref_mag must be non-negative")
        if len(self.bs_position) != 2:
            raise ValueError("bs_position must have two coordinates")
        self.bs_position = [float(v) for v in self.bs_position]

    @property
    def noise_power(self) -> float:
        """Noise power in watts."""
        return dbm_to_watt(self.noise_power_dbm)

    @property
    def bs(self) -> np.ndarray:
        return np.asarray(self.bs_position, dtype=float)

    @property
    def phase_scale(self) -> float:
        """``2*pi*d/lambda``: inter-element phase step per unit cosine."""
        return 2.0 * math.pi * self.spacing / self.wavelength


@dataclass(frozen=True)
class FullChannelState:
    alpha_mag: float
    alpha_arg: float
    aod: float
    aoa: float

    @property
    def alpha(self) -> complex:
        return cmath.rect(self.alpha_mag, self.alpha_arg)

    def reduced(self) -> ReducedChannelState:
        return ReducedChannelState(self.alpha_mag, self.aod, self.aoa)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_mag, self.alpha_arg, self.aod, self.aoa])


@dataclass(frozen=True)
class ReducedChannelState:
    """Tracked channel: gain magnitude, AoD and AoA (rad); the phase is dropped."""

    alpha_mag: float
    aod: float
    aoa: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_mag, self.aod, self.aoa])

    @classmethod
    def from_array(cls, s) -> ReducedChannelState:
        return cls(float(s[0]), float(s[1]), float(s[2]))


@dataclass(frozen=True)
class Measurement:
    z: complex
    z_bar: float
    pilot: complex = 1.0 + 0.0j


def array_response(angle: float, n: int, d: float, wavelength: float) -> np.ndarray:
    """Unit-norm ULA steering vector with element phase ``-k*2*pi*d/lambda*cos(angle)``."""
    if n < 1:
        raise ValueError("array needs at least one element")
    k = np.arange(n)
    return np.exp(-1j * k * (2.0 * math.pi * d / wavelength) * math.cos(angle)) / math.sqrt(n)


def tx_response(aod: float, cfg: ChannelConfig) -> np.ndarray:
    return array_response(aod, cfg.n_tx, cfg.spacing, cfg.wavelength)


def rx_response(aoa: float, cfg: ChannelConfig) -> np.ndarray:
    return array_response(aoa, cfg.n_rx, cfg.spacing, cfg.wavelength)


def path_gain(r, cfg: ChannelConfig) -> complex:
    """Complex LoS gain at BS-relative offset ``r`` (simplified path-loss model)."""
    dist = float(np.hypot(*np.asarray(r, dtype=float)))
    if not dist > 0:
        raise ValueError("path gain undefined at zero distance")
    mag = cfg.alpha_ref_mag * (cfg.d0 / dist) ** (cfg.path_loss_exponent / 2.0)
    arg = cfg.alpha_ref_arg + 2.0 * math.pi / cfg.wavelength * (dist - cfg.d0)
    return cmath.rect(mag, arg)


def gain_magnitude(dist: float, cfg: ChannelConfig) -> float:
    return cfg.alpha_ref_mag * (cfg.d0 / dist) ** (cfg.path_loss_exponent / 2.0)


def bs_relative(position, cfg: ChannelConfig) -> np.ndarray:
    return np.asarray(position, dtype=float) - cfg.bs


def pose_to_channel(vehicle: Pose2, cfg: ChannelConfig) -> FullChannelState:
    """Ground-truth LoS channel state for a vehicle pose."""
    x, y = bs_relative(vehicle.r, cfg)
    if x == 0.0 and y == 0.0:
        raise ValueError("vehicle coincides with the base station")
    alpha = path_gain((x, y), cfg)
    aod = math.atan2(x, y)
    aoa = wrap_angle(math.pi + aod - vehicle.theta)
    arg = wrap_angle(cmath.phase(alpha))
    return FullChannelState(abs(alpha), arg, aod, aoa)


def channel_to_pose(state: ReducedChannelState, cfg: ChannelConfig) -> Pose2:
    """Invert the LoS geometry: distance from the gain, bearing from the AoD, yaw from both angles."""
    dist = cfg.d0 * (cfg.alpha_ref_mag / state.alpha_mag) ** (2.0 / cfg.path_loss_exponent)
    r = cfg.bs + dist * np.array([math.sin(state.aod), math.cos(state.aod)])
    return Pose2(r, math.pi + state.aod - state.aoa)


def los_channel_matrix(state: FullChannelState, cfg: ChannelConfig) -> np.ndarray:
    """M x N LoS channel ``alpha * a_r(aoa) a_t(aod)^H``."""
    return state.alpha * np.outer(rx_response(state.aoa, cfg), tx_response(state.aod, cfg).conj())


def received_signal(
    state: FullChannelState,
    f: np.ndarray,
    g: np.ndarray,
    b: complex,
    noise_power: float,
    rng: np.random.Generator,
    cfg: ChannelConfig,
) -> Measurement:
    """Pilot ``b`` through the LoS channel with precoder ``f`` and combiner ``g``, plus AWGN."""
    gain_rx = np.vdot(g, rx_response(state.aoa, cfg))
    gain_tx = np.vdot(tx_response(state.aod, cfg), f)
    clean = state.alpha * gain_rx * gain_tx * b
    if noise_power > 0:
        v = complex(*rng.standard_normal(2)) * math.sqrt(noise_power / 2.0)
    else:
        v = 0j
    z = complex(clean + v)
    return Measurement(z, abs(z) ** 2 - noise_power, b)


def measurement_variance(h_bar: float, noise_power: float) -> float:
    """Variance of the power-domain measurement noise."""
    if h_bar < 0:
        raise ValueError("h_bar must be non-negative")
    return (noise_power + 2.0 * h_bar) * noise_power
