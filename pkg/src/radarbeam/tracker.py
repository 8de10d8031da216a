"""Pose-driven EKF beam tracking of the reduced LoS channel state.

State vector ``[|alpha|, aod, aoa]``. The prediction step is driven by two
consecutive pose estimates; the update uses one scalar received-power
measurement per slot. When the tracked state drifts too far from the last
(re-)initialisation, the channel is re-acquired from an oracle that stands in
for beam training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelConfig,
    ReducedChannelState,
    channel_to_pose,
    measurement_variance,
    pose_to_channel,
    received_signal,
    rx_response,
    tx_response,
)
from .geometry import Pose2, wrap_angle

INNOVATION_MODES = ("ekf", "paper-literal")


@dataclass
class TrackerConfig:
    sigma_r: float = 1.0
    sigma_theta_deg: float = 3.0
    alpha_threshold: float = 5e-7
    aod_threshold_deg: float = 7.5
    aoa_threshold_deg: float = 7.5
    innovation_mode: str = "ekf"
    # after a re-initialisation, take the next slot's previous pose from the
    # acquired channel instead of the drifting pose estimate
    reanchor_on_reinit: bool = True

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_theta_deg < 0:
            raise ValueError("pose error deviations must be non-negative")
        if min(self.alpha_threshold, self.aod_threshold_deg, self.aoa_threshold_deg) <= 0:
            raise ValueError("re-initialisation thresholds must be positive")
        if self.innovation_mode not in INNOVATION_MODES:
            raise ValueError(f"innovation_mode must be one of {INNOVATION_MODES}")

    @property
    def sigma_theta(self) -> float:
        return math.radians(self.sigma_theta_deg)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array(
            [
                self.alpha_threshold,
                math.radians(self.aod_threshold_deg),
                math.radians(self.aoa_threshold_deg),
            ]
        )


@dataclass(frozen=True)
class EvolutionInputs:
    """Estimated BS-relative positions and yaws of two consecutive slots."""

    r_prev: np.ndarray
    r_cur: np.ndarray
    theta_prev: float
    theta_cur: float

    @classmethod
    def from_poses(cls, prev: Pose2, cur: Pose2, cfg: ChannelConfig) -> EvolutionInputs:
        bs = cfg.bs
        return cls(prev.r - bs, cur.r - bs, prev.theta, cur.theta)


@dataclass
class EvolutionModel:
    F: np.ndarray
    u: np.ndarray
    Q: np.ndarray
    rho: float
    beta: float
    zeta: float


def _norms(inputs: EvolutionInputs) -> tuple[float, float]:
    n_prev = math.hypot(inputs.r_prev[0], inputs.r_prev[1])
    n_cur = math.hypot(inputs.r_cur[0], inputs.r_cur[1])
    if n_prev == 0.0 or n_cur == 0.0:
        raise ValueError("vehicle position coincides with the base station")
    return n_prev, n_cur


def evolution(
    inputs: EvolutionInputs,
    alpha_mag_est: float,
    ccfg: ChannelConfig,
    tcfg: TrackerConfig,
) -> EvolutionModel:
    """Linear prediction model ``s_k = F s_{k-1} + u + w`` from two pose estimates.

    ``alpha_mag_est`` is the previous posterior gain magnitude; it scales the
    gain entry of the process noise.
    """
    n_prev, n_cur = _norms(inputs)
    gamma = ccfg.path_loss_exponent
    rho = (n_prev / n_cur) ** (gamma / 2.0)
    u3 = wrap_angle(
        math.atan2(inputs.r_cur[0], inputs.r_cur[1]) - math.atan2(inputs.r_prev[0], inputs.r_prev[1])
    )
    dtheta = wrap_angle(inputs.theta_cur - inputs.theta_prev)
    beta = 1.0 / n_prev**2 + 1.0 / n_cur**2
    zeta = 1.0 / n_prev + 1.0 / n_cur

    sr2 = tcfg.sigma_r**2
    st2 = tcfg.sigma_theta**2
    q_alpha = (gamma / 2.0 * rho * alpha_mag_est) ** 2 * beta * sr2
    b = beta * sr2
    Q = np.array(
        [
            [q_alpha, 0.0, 0.0],
            [0.0, b, b],
            [0.0, b, b + 2.0 * st2],
        ]
    )
    return EvolutionModel(
        F=np.diag([rho, 1.0, 1.0]),
        u=np.array([0.0, u3, u3 - dtheta]),
        Q=Q,
        rho=rho,
        beta=beta,
        zeta=zeta,
    )


def full_process_noise(
    inputs: EvolutionInputs,
    alpha_mag_est: float,
    ccfg: ChannelConfig,
    tcfg: TrackerConfig,
) -> np.ndarray:
    """4x4 process noise covariance of ``[|alpha|, arg alpha, aod, aoa]``.

    Only used for diagnostics: the filter never tracks the gain phase.
    """
    model = evolution(inputs, alpha_mag_est, ccfg, tcfg)
    gamma = ccfg.path_loss_exponent
    lam = ccfg.wavelength
    sr2 = tcfg.sigma_r**2
    c = gamma / 2.0 * model.rho * alpha_mag_est
    A = sr2 * np.array(
        [
            [c**2 * model.beta, -math.pi / lam * gamma * model.rho * alpha_mag_est * model.zeta],
            [-math.pi / lam * gamma * model.rho * alpha_mag_est * model.zeta, (2.0 * math.pi / lam) ** 2],
        ]
    )
    Q = np.zeros((4, 4))
    Q[:2, :2] = A
    Q[2:, 2:] = model.Q[1:, 1:]
    return Q


def full_process_noise_diag(inputs, alpha_mag_est, ccfg, tcfg) -> np.ndarray:
    return np.diag(full_process_noise(inputs, alpha_mag_est, ccfg, tcfg)).copy()


def phase_std_per_slot(ccfg: ChannelConfig, tcfg: TrackerConfig) -> float:
    """Standard deviation of the gain phase driven by position error (rad)."""
    return 2.0 * math.pi / ccfg.wavelength * tcfg.sigma_r


def steering_derivative_matrix(angle: float, n: int, d: float, wavelength: float) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column ``p * exp(-j(p*kappa*cos(angle) - pi/2))``.

    ``kappa = 2*pi*d/lambda``. Its quadratic form gives the angular
    derivative of a beamforming gain.
    """
    p = np.arange(n)
    kappa = 2.0 * math.pi * d / wavelength
    eta = p * np.exp(-1j * (p * kappa * math.cos(angle) - math.pi / 2.0))
    diff = p[:, None] - p[None, :]
    lower = eta[np.abs(diff)]
    return np.where(diff >= 0, lower, lower.conj())


def _beam_gains(s, f, g, ccfg):
    a_t = tx_response(s[1], ccfg)
    a_r = rx_response(s[2], ccfg)
    gt = abs(np.vdot(f, a_t)) ** 2
    gr = abs(np.vdot(g, a_r)) ** 2
    return gt, gr


def measurement_fn(s, f, g, b, ccfg: ChannelConfig) -> float:
    """Noise-free received power ``|b|^2 |alpha|^2 |g^H a_r|^2 |f^H a_t|^2``."""
    gt, gr = _beam_gains(s, f, g, ccfg)
    return abs(b) ** 2 * s[0] ** 2 * gr * gt


def measurement_gradient(s, f, g, b, ccfg: ChannelConfig) -> np.ndarray:
    """Gradient of :func:`measurement_fn` w.r.t. ``[|alpha|, aod, aoa]``."""
    alpha, aod, aoa = s[0], s[1], s[2]
    gt, gr = _beam_gains(s, f, g, ccfg)
    b2 = abs(b) ** 2
    kappa = ccfg.phase_scale
    Phi = steering_derivative_matrix(aod, ccfg.n_tx, ccfg.spacing, ccfg.wavelength)
    Psi = steering_derivative_matrix(aoa, ccfg.n_rx, ccfg.spacing, ccfg.wavelength)
    f_form = np.vdot(f, Phi @ f).real
    g_form = np.vdot(g, Psi @ g).real
    return np.array(
        [
            2.0 * b2 * alpha * gr * gt,
            kappa * math.sin(aod) / ccfg.n_tx * b2 * alpha**2 * gr * f_form,
            kappa * math.sin(aoa) / ccfg.n_rx * b2 * alpha**2 * gt * g_form,
        ]
    )


def predict(s, P, model: EvolutionModel):
    """A priori state and covariance; the gain magnitude is clamped at zero."""
    s_pred = model.F @ s + model.u
    s_pred[0] = max(s_pred[0], 0.0)
    P_pred = model.F @ P @ model.F.T + model.Q
    return s_pred, P_pred


@dataclass
class UpdateResult:
    s: np.ndarray
    P: np.ndarray
    gain: np.ndarray
    innovation: float
    skipped: bool = False


def update(s_pred, P_pred, z_bar: float, f, g, b, ccfg: ChannelConfig, mode: str = "ekf") -> UpdateResult:
    """Scalar-measurement EKF correction.

    ``mode="ekf"`` uses the innovation ``z_bar - h(s_pred)``;
    ``mode="paper-literal"`` uses ``z_bar - grad_h(s_pred) . s_pred``.
    A non-finite or non-positive innovation variance skips the update.
    """
    H = measurement_gradient(s_pred, f, g, b, ccfg)
    h = measurement_fn(s_pred, f, g, b, ccfg)
    PH = P_pred @ H
    S = float(H @ PH) + measurement_variance(h, ccfg.noise_power)
    if not (math.isfinite(S) and S > 0):
        return UpdateResult(s_pred.copy(), P_pred.copy(), np.zeros(3), math.nan, skipped=True)
    K = PH / S
    if mode == "ekf":
        innov = z_bar - h
    elif mode == "paper-literal":
        innov = z_bar - float(H @ s_pred)
    else:
        raise ValueError(f"unknown innovation mode {mode!r}")
    s_post = s_pred + K * innov
    s_post[0] = max(s_post[0], 0.0)
    P_post = (np.eye(3) - np.outer(K, H)) @ P_pred
    P_post = 0.5 * (P_post + P_post.T)
    return UpdateResult(s_post, P_post, K, innov)


def deviation(s, s_init) -> np.ndarray:
    """Absolute deviation from the reference state, angles on the shortest arc."""
    return np.array(
        [
            abs(s[0] - s_init[0]),
            abs(wrap_angle(s[1] - s_init[1])),
            abs(wrap_angle(s[2] - s_init[2])),
        ]
    )


def check_reinit(state: TrackerState, tcfg: TrackerConfig) -> bool:
    return bool(np.any(deviation(state.s, state.s_init) > tcfg.thresholds))


@dataclass
class TrackerState:
    s: np.ndarray
    P: np.ndarray
    s_init: np.ndarray
    reinit_count: int = 0


@dataclass
class SlotRecord:
    k: int
    s_true: np.ndarray
    s_pred: np.ndarray
    s_post: np.ndarray
    z_bar: float
    reinit: bool
    skipped: bool


def oracle_state(true_pose: Pose2, ccfg: ChannelConfig) -> np.ndarray:
    return pose_to_channel(true_pose, ccfg).reduced().as_array()


def initialize(true_pose0: Pose2, pose_est0: Pose2, ccfg: ChannelConfig, tcfg: TrackerConfig) -> TrackerState:
    """Acquire the initial channel from the oracle and seed P with the slot-0 process noise.

    The slot-0 noise needs a slot -1 pose; the slot-0 estimate is reused.
    """
    s0 = oracle_state(true_pose0, ccfg)
    inputs = EvolutionInputs.from_poses(pose_est0, pose_est0, ccfg)
    P0 = evolution(inputs, s0[0], ccfg, tcfg).Q
    return TrackerState(s=s0.copy(), P=P0, s_init=s0.copy())


def track_step(
    state: TrackerState,
    pose_est_prev: Pose2,
    pose_est_cur: Pose2,
    true_pose_cur: Pose2,
    ccfg: ChannelConfig,
    tcfg: TrackerConfig,
    rng: np.random.Generator,
    k: int = 0,
    pilot: complex = 1.0 + 0.0j,
) -> tuple[TrackerState, SlotRecord]:
    """One slot of beam tracking: steer, measure, predict, correct, check deviation."""
    f = tx_response(state.s[1], ccfg)
    g = rx_response(state.s[2], ccfg)
    truth = pose_to_channel(true_pose_cur, ccfg)
    meas = received_signal(truth, f, g, pilot, ccfg.noise_power, rng, ccfg)

    inputs = EvolutionInputs.from_poses(pose_est_prev, pose_est_cur, ccfg)
    model = evolution(inputs, state.s[0], ccfg, tcfg)
    s_pred, P_pred = predict(state.s, state.P, model)
    upd = update(s_pred, P_pred, meas.z_bar, f, g, pilot, ccfg, tcfg.innovation_mode)

    new = TrackerState(upd.s, upd.P, state.s_init.copy(), state.reinit_count)
    s_true = truth.reduced().as_array()
    reinit = check_reinit(new, tcfg)
    if reinit:
        new.s = s_true.copy()
        new.s_init = s_true.copy()
        new.P = model.Q.copy()
        new.reinit_count += 1
    record = SlotRecord(k, s_true, s_pred, new.s.copy(), meas.z_bar, reinit, upd.skipped)
    return new, record


@dataclass
class TrackTimeline:
    """Per-slot history of one tracking run."""

    true_poses: list = field(default_factory=list)
    est_poses: list = field(default_factory=list)
    s_true: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    s_track: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    reinit: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    z_bar: np.ndarray = field(default_factory=lambda: np.empty(0))
    covariances: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.s_true)

    @property
    def reinit_count(self) -> int:
        return int(np.count_nonzero(self.reinit))


def run_tracking(
    true_poses: list[Pose2],
    est_poses: list[Pose2],
    ccfg: ChannelConfig,
    tcfg: TrackerConfig,
    rng: np.random.Generator,
    keep_covariances: bool = False,
) -> TrackTimeline:
    """Track the channel over a whole trajectory.

    Slot 0 is the initial acquisition; slots 1.. run :func:`track_step`.
    With ``tcfg.reanchor_on_reinit`` the pose that seeds the evolution step
    right after a re-initialisation is recovered from the freshly acquired
    channel, so the estimate error is not carried across the reset.
    """
    if len(true_poses) != len(est_poses):
        raise ValueError("true and estimated trajectories differ in length")
    if not true_poses:
        raise ValueError("empty trajectory")
    n = len(true_poses)
    state = initialize(true_poses[0], est_poses[0], ccfg, tcfg)
    s_true = np.empty((n, 3))
    s_track = np.empty((n, 3))
    reinit = np.zeros(n, dtype=bool)
    z_bar = np.full(n, np.nan)
    covs = np.empty((n, 3, 3)) if keep_covariances else None
    s_true[0] = state.s
    s_track[0] = state.s
    if covs is not None:
        covs[0] = state.P
    prev = est_poses[0]
    for k in range(1, n):
        state, rec = track_step(state, prev, est_poses[k], true_poses[k], ccfg, tcfg, rng, k=k)
        if rec.reinit and tcfg.reanchor_on_reinit:
            prev = channel_to_pose(ReducedChannelState.from_array(rec.s_post), ccfg)
        else:
            prev = est_poses[k]
        s_true[k] = rec.s_true
        s_track[k] = rec.s_post
        reinit[k] = rec.reinit
        z_bar[k] = rec.z_bar
        if covs is not None:
            covs[k] = state.P
    return TrackTimeline(list(true_poses), list(est_poses), s_true, s_track, reinit, z_bar, covs)
