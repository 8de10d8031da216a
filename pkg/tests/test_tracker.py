import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radarbeam.channel import ChannelConfig, los_channel_matrix, FullChannelState, rx_response, tx_response
from radarbeam.geometry import Pose2
from radarbeam.synth import TrajectorySpec, generate_trajectory
from radarbeam.tracker import (
    EvolutionInputs,
    TrackerConfig,
    TrackerState,
    check_reinit,
    evolution,
    full_process_noise,
    full_process_noise_diag,
    initialize,
    measurement_fn,
    measurement_gradient,
    oracle_state,
    phase_std_per_slot,
    predict,
    run_tracking,
    steering_derivative_matrix,
    track_step,
    update,
)

CCFG = ChannelConfig()
TCFG = TrackerConfig()


def inputs(r0, r1, t0=0.0, t1=0.0):
    return EvolutionInputs(np.asarray(r0, float), np.asarray(r1, float), t0, t1)


def unit(v):
    return v / np.linalg.norm(v)


def random_beam(rng, n):
    return unit(rng.normal(size=n) + 1j * rng.normal(size=n))


def test_defaults():
    assert TCFG.sigma_r == 1.0 and TCFG.sigma_theta == pytest.approx(math.radians(3))
    np.testing.assert_allclose(TCFG.thresholds, [5e-7, math.radians(7.5), math.radians(7.5)])
    with pytest.raises(ValueError):
        TrackerConfig(innovation_mode="other")
    with pytest.raises(ValueError):
        TrackerConfig(aod_threshold_deg=0)


def test_stationary_model():
    m = evolution(inputs([10, 50], [10, 50], 0.3, 0.3), 1e-6, CCFG, TCFG)
    assert m.rho == 1.0
    np.testing.assert_array_equal(m.u, 0)
    np.testing.assert_array_equal(m.F, np.eye(3))


def test_rho_example():
    m = evolution(inputs([0, 100], [0, 50]), 1e-6, CCFG, TCFG)
    assert m.rho == pytest.approx(2**1.1) and m.rho == pytest.approx(2.1435, abs=1e-4)


def test_process_noise_example():
    m = evolution(inputs([0, 100], [0, 100]), 0.0, CCFG, TCFG)
    assert m.beta == pytest.approx(2e-4)
    st_ = math.radians(3)
    assert st_ == pytest.approx(0.05236, abs=1e-5)
    np.testing.assert_allclose(m.Q[1:, 1:], [[2e-4, 2e-4], [2e-4, 2e-4 + 2 * st_**2]], rtol=1e-12)
    assert np.all(np.linalg.eigvalsh(m.Q) >= -1e-15)


def test_control_input_uses_atan2_difference_and_yaw_change():
    r0, r1 = np.array([20.0, 80.0]), np.array([25.0, 79.0])
    m = evolution(inputs(r0, r1, 0.1, 0.15), 1e-6, CCFG, TCFG)
    u3 = math.atan(r1[0] / r1[1]) - math.atan(r0[0] / r0[1])
    np.testing.assert_allclose(m.u, [0.0, u3, u3 - 0.05], atol=1e-15)
    with pytest.raises(ValueError):
        evolution(inputs([0, 0], [1, 1]), 1e-6, CCFG, TCFG)


@given(st.integers(0, 2**32 - 1))
def test_process_noise_psd_and_determinant(seed):
    rng = np.random.default_rng(seed)
    r0, r1 = rng.uniform(-500, 500, 2), rng.uniform(-500, 500, 2)
    tcfg = TrackerConfig(sigma_r=rng.uniform(0, 5), sigma_theta_deg=rng.uniform(0, 10))
    m = evolution(inputs(r0, r1, *rng.uniform(-3, 3, 2)), rng.uniform(0, 1e-4), CCFG, tcfg)
    np.testing.assert_array_equal(m.Q, m.Q.T)
    assert np.linalg.eigvalsh(m.Q).min() >= -1e-15
    b = m.beta * tcfg.sigma_r**2
    assert np.linalg.det(m.Q[1:, 1:]) == pytest.approx(b * 2 * tcfg.sigma_theta**2, rel=1e-6, abs=1e-30)


def test_full_process_noise_phase_entry():
    diag = full_process_noise_diag(inputs([0, 100], [1, 100]), 1e-6, CCFG, TCFG)
    assert math.sqrt(diag[1]) == pytest.approx(2 * math.pi / 6e-3)
    assert math.sqrt(diag[1]) == pytest.approx(1047.2, abs=0.1)
    assert phase_std_per_slot(CCFG, TCFG) == pytest.approx(math.sqrt(diag[1]))
    zero = full_process_noise_diag(inputs([0, 100], [1, 100]), 1e-6, CCFG, TrackerConfig(sigma_r=0, sigma_theta_deg=0))
    np.testing.assert_array_equal(zero, 0)


@given(st.integers(0, 2**32 - 1))
def test_gain_phase_block(seed):
    rng = np.random.default_rng(seed)
    inp = inputs(rng.uniform(1, 300, 2), rng.uniform(1, 300, 2))
    alpha = rng.uniform(0, 1e-4)
    Q = full_process_noise(inp, alpha, CCFG, TCFG)
    m = evolution(inp, alpha, CCFG, TCFG)
    g, lam = CCFG.path_loss_exponent, CCFG.wavelength
    assert Q[0, 1] == pytest.approx(-(math.pi / lam) * g * m.rho * alpha * m.zeta * TCFG.sigma_r**2, rel=1e-12, abs=1e-300)
    # the gain/phase block as defined is indefinite for |alpha| > 0:
    # det = (pi/lam)^2 gamma^2 rho^2 |alpha|^2 sigma_r^4 (beta - zeta^2), and beta < zeta^2
    A = Q[:2, :2]
    n0, n1 = np.linalg.norm(inp.r_prev), np.linalg.norm(inp.r_cur)
    want = -2.0 * (math.pi / lam) ** 2 * g**2 * m.rho**2 * alpha**2 * TCFG.sigma_r**4 / (n0 * n1)
    assert A[0, 0] * A[1, 1] - A[0, 1] ** 2 == pytest.approx(want, rel=1e-6, abs=1e-30)
    np.testing.assert_array_equal(Q[2:, 2:], m.Q[1:, 1:])


def test_measurement_fn_examples(rng):
    s = np.array([3e-6, 0.4, -2.0])
    f, g = tx_response(s[1], CCFG), rx_response(s[2], CCFG)
    assert measurement_fn(s, f, g, 1.0, CCFG) == pytest.approx(s[0] ** 2)
    assert measurement_fn(np.array([0.0, 0.4, -2.0]), f, g, 1.0, CCFG) == 0.0
    for _ in range(20):
        s = np.array([rng.uniform(1e-7, 1e-4), rng.uniform(-3, 3), rng.uniform(-3, 3)])
        f, g, b = random_beam(rng, 4), random_beam(rng, 4), np.exp(1j * rng.uniform(0, 6))
        H = los_channel_matrix(FullChannelState(s[0], rng.uniform(-3, 3), s[1], s[2]), CCFG)
        assert measurement_fn(s, f, g, b, CCFG) == pytest.approx(abs(np.vdot(g, H @ f) * b) ** 2, rel=1e-12)


def test_gradient_at_alignment():
    s = np.array([2e-6, 0.7, 2.2])
    grad = measurement_gradient(s, tx_response(s[1], CCFG), rx_response(s[2], CCFG), 1.0, CCFG)
    assert grad[0] == pytest.approx(2 * s[0])
    assert abs(grad[1]) < 1e-12 * s[0] ** 2 and abs(grad[2]) < 1e-12 * s[0] ** 2


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_derivative_matrix_hermitian(seed, n):
    rng = np.random.default_rng(seed)
    Phi = steering_derivative_matrix(rng.uniform(-3, 3), n, 3e-3, 6e-3)
    np.testing.assert_allclose(Phi, Phi.conj().T, atol=0)
    f = random_beam(rng, n)
    assert abs(np.vdot(f, Phi @ f).imag) <= 1e-12


def fd_gradient(s, f, g, b, h=1e-7):
    out = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = (measurement_fn(s + e, f, g, b, CCFG) - measurement_fn(s - e, f, g, b, CCFG)) / (2 * h)
    return out


@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    s = np.array([rng.uniform(1e-7, 1e-4), rng.uniform(-3, 3), rng.uniform(-3, 3)])
    f = tx_response(s[1] + rng.normal(0, 0.2), CCFG)
    g = random_beam(rng, 4)
    grad = measurement_gradient(s, f, g, 1.0, CCFG)
    fd = fd_gradient(s, f, g, 1.0)
    scale = np.abs(fd).max()
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5 * scale * 1e-3)


def test_predict_examples():
    s, P = np.array([1e-6, 0.2, 0.3]), np.diag([1e-14, 1e-3, 2e-3])
    m = evolution(inputs([0, 100], [0, 100]), 0.0, CCFG, TrackerConfig(sigma_r=0, sigma_theta_deg=0))
    s1, P1 = predict(s, P, m)
    np.testing.assert_array_equal(s1, s)
    np.testing.assert_array_equal(P1, P)
    m = evolution(inputs([0, 100], [0, 100 / 2 ** (1 / 1.1)]), 1e-6, CCFG, TCFG)
    assert m.rho == pytest.approx(2.0)
    s2, P2 = predict(s, P, m)
    assert s2[0] == pytest.approx(2e-6)
    assert P2[0, 0] == pytest.approx(4 * P[0, 0] + m.Q[0, 0])


@given(st.integers(0, 2**32 - 1))
def test_predict_keeps_psd(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    P = A @ A.T * 1e-3
    m = evolution(inputs(rng.uniform(1, 300, 2), rng.uniform(1, 300, 2)), 1e-6, CCFG, TCFG)
    _, P1 = predict(np.array([1e-6, 0.1, 0.2]), P, m)
    assert np.linalg.eigvalsh(P1).min() >= -1e-15


def test_update_zero_gradient_is_noop():
    s = np.array([0.0, 0.3, 0.4])
    P = np.diag([1e-14, 1e-3, 1e-3])
    f, g = tx_response(0.3, CCFG), rx_response(0.4, CCFG)
    out = update(s, P, 5e-12, f, g, 1.0, CCFG)
    np.testing.assert_array_equal(out.gain, 0)
    np.testing.assert_array_equal(out.s, s)
    np.testing.assert_allclose(out.P, P)


def test_update_noiseless_consistent_state_unchanged():
    s = np.array([2e-6, 0.3, 0.4])
    f, g = tx_response(0.31, CCFG), rx_response(0.38, CCFG)
    z = measurement_fn(s, f, g, 1.0, CCFG)
    out = update(s, np.diag([1e-14, 1e-4, 1e-4]), z, f, g, 1.0, CCFG)
    np.testing.assert_allclose(out.s, s, rtol=0, atol=1e-18)


def test_update_scalar_reduction_matches_1d_kalman():
    s = np.array([2e-6, 0.3, 0.4])
    f, g = tx_response(0.35, CCFG), rx_response(0.5, CCFG)
    p = 1e-14
    P = np.diag([p, 0.0, 0.0])
    z = 3.1e-12
    out = update(s, P, z, f, g, 1.0, CCFG)
    h = measurement_fn(s, f, g, 1.0, CCFG)
    H0 = measurement_gradient(s, f, g, 1.0, CCFG)[0]
    R = (CCFG.noise_power + 2 * h) * CCFG.noise_power
    k = p * H0 / (H0 * p * H0 + R)
    assert out.s[0] == pytest.approx(s[0] + k * (z - h), rel=1e-12)
    assert out.P[0, 0] == pytest.approx((1 - k * H0) * p, rel=1e-9)
    np.testing.assert_array_equal(out.s[1:], s[1:])


def test_paper_literal_innovation():
    s = np.array([2e-6, 0.3, 0.4])
    f, g = tx_response(0.35, CCFG), rx_response(0.5, CCFG)
    P = np.diag([1e-14, 1e-4, 1e-4])
    H = measurement_gradient(s, f, g, 1.0, CCFG)
    out = update(s, P, 3e-12, f, g, 1.0, CCFG, mode="paper-literal")
    assert out.innovation == pytest.approx(3e-12 - H @ s)
    with pytest.raises(ValueError):
        update(s, P, 3e-12, f, g, 1.0, CCFG, mode="bogus")


def test_update_skips_degenerate_variance():
    cfg = ChannelConfig(noise_power_dbm=-math.inf)
    s = np.array([0.0, 0.3, 0.4])
    out = update(s, np.zeros((3, 3)), 1.0, tx_response(0.3, cfg), rx_response(0.4, cfg), 1.0, cfg)
    assert out.skipped and np.array_equal(out.s, s)


@given(st.integers(0, 2**32 - 1))
def test_update_trace_never_grows(seed):
    rng = np.random.default_rng(seed)
    s = np.array([rng.uniform(1e-7, 1e-5), rng.uniform(-3, 3), rng.uniform(-3, 3)])
    A = rng.normal(size=(3, 3)) * [1e-7, 1e-2, 1e-2]
    P = A @ A.T
    f = tx_response(s[1] + rng.normal(0, 0.1), CCFG)
    g = rx_response(s[2] + rng.normal(0, 0.1), CCFG)
    out = update(s, P, rng.uniform(0, 1e-10), f, g, 1.0, CCFG)
    assert np.trace(out.P) <= np.trace(P) + 1e-12
    np.testing.assert_array_equal(out.P, out.P.T)


def test_check_reinit_examples():
    s0 = np.array([2e-6, 0.2, 0.3])
    state = TrackerState(s0.copy(), np.eye(3), s0.copy())
    assert not check_reinit(state, TCFG)
    state.s = s0 + [0, math.radians(8), 0]
    assert check_reinit(state, TCFG)
    state.s = s0 + [4e-7, math.radians(7), -math.radians(7)]
    assert not check_reinit(state, TCFG)
    state.s = s0 + [6e-7, 0, 0]
    assert check_reinit(state, TCFG)


def test_check_reinit_wraps_angles():
    s0 = np.array([2e-6, math.pi - 0.01, -math.pi + 0.01])
    state = TrackerState(np.array([2e-6, -math.pi + 0.01, math.pi - 0.01]), np.eye(3), s0)
    assert not check_reinit(state, TCFG)


def quiet():
    return ChannelConfig(noise_power_dbm=-400.0)


def test_fixed_point_with_true_poses():
    poses = generate_trajectory(TrajectorySpec(kind="arc", slot_count=300, speed=6.0, arc_radius=60.0))
    ccfg = quiet()
    tl = run_tracking(poses, poses, ccfg, TCFG, np.random.default_rng(0))
    truth = np.array([oracle_state(p, ccfg) for p in poses])
    np.testing.assert_allclose(tl.s_track[:, 0], truth[:, 0], rtol=1e-6)
    ang = (tl.s_track[:, 1:] - truth[:, 1:] + np.pi) % (2 * np.pi) - np.pi
    assert np.abs(ang).max() < 1e-6


def test_stationary_vehicle_never_reinitialises():
    poses = [Pose2([50.0, 20.0], 0.4)] * 200
    tl = run_tracking(poses, poses, CCFG, TCFG, np.random.default_rng(1))
    assert tl.reinit_count == 0


def test_reinit_resets_to_truth_and_counts():
    true = [Pose2([0.0, 0.0], 0.0), Pose2([1.0, 0.0], 0.0)]
    est_cur = Pose2([1.0, 0.0], math.radians(20))  # yaw error far beyond the AoA threshold
    state = initialize(true[0], true[0], CCFG, TCFG)
    new, rec = track_step(state, true[0], est_cur, true[1], CCFG, TCFG, np.random.default_rng(0), k=1)
    assert rec.reinit and new.reinit_count == 1
    np.testing.assert_array_equal(new.s, oracle_state(true[1], CCFG))
    np.testing.assert_array_equal(new.s_init, new.s)


def test_initial_covariance_uses_repeated_pose():
    p = Pose2([10.0, 40.0], 0.0)
    st_ = initialize(p, p, CCFG, TCFG)
    r = np.hypot(40, 165)
    assert st_.P[1, 1] == pytest.approx(2 / r**2 * TCFG.sigma_r**2)


@pytest.mark.parametrize("reanchor", [True, False])
def test_run_tracking_with_noise(reanchor):
    from radarbeam.synth import NoiseSpec, perturb_trajectory

    poses = generate_trajectory(TrajectorySpec(kind="arc", slot_count=400, speed=6.0, arc_radius=200.0))
    est = perturb_trajectory(poses, NoiseSpec(), np.random.default_rng(3))
    tl = run_tracking(poses, est, CCFG, TrackerConfig(reanchor_on_reinit=reanchor), np.random.default_rng(4), keep_covariances=True)
    assert len(tl) == 400 and np.all(np.isfinite(tl.s_track))
    for P in tl.covariances:
        np.testing.assert_array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= -1e-12 * max(1.0, np.abs(P).max())


def test_run_tracking_rejects_mismatch():
    p = [Pose2([0, 0], 0)] * 3
    with pytest.raises(ValueError):
        run_tracking(p, p[:2], CCFG, TCFG, np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_tracking([], [], CCFG, TCFG, np.random.default_rng(0))
