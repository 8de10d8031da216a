import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radarbeam.channel import (
    ChannelConfig,
    FullChannelState,
    ReducedChannelState,
    array_response,
    channel_to_pose,
    dbm_to_watt,
    los_channel_matrix,
    measurement_variance,
    path_gain,
    pose_to_channel,
    received_signal,
    rx_response,
    tx_response,
)
from radarbeam.geometry import Pose2, wrap_angle

CFG = ChannelConfig()


def test_table_defaults():
    assert (CFG.n_tx, CFG.n_rx) == (4, 4)
    assert CFG.wavelength == 6e-3 and CFG.spacing == CFG.wavelength / 2
    assert CFG.carrier_hz == 50e9 and CFG.path_loss_exponent == 2.2
    assert CFG.alpha_ref_mag == 5e-4 and CFG.bs_position == [-30.0, -125.0]
    assert CFG.noise_power == pytest.approx(1e-12)
    assert dbm_to_watt(30.0) == pytest.approx(1.0)


@pytest.mark.parametrize("kwargs", [dict(n_tx=0), dict(spacing=0), dict(wavelength=-1), dict(path_loss_exponent=0), dict(bs_position=[1.0])])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ChannelConfig(**kwargs)


def test_array_response_examples():
    np.testing.assert_allclose(array_response(math.pi / 2, 4, 3e-3, 6e-3), 0.5 * np.ones(4), atol=1e-15)
    np.testing.assert_allclose(array_response(0.0, 4, 3e-3, 6e-3), 0.5 * np.array([1, -1, 1, -1]), atol=1e-15)


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(1, 16))
def test_array_response_norm_and_inner_product(a1, a2, n):
    x = array_response(a1, n, 3e-3, 6e-3)
    y = array_response(a2, n, 3e-3, 6e-3)
    assert abs(np.linalg.norm(x) - 1) < 1e-12
    assert abs(np.vdot(x, y)) <= 1 + 1e-12
    if math.isclose(math.cos(a1), math.cos(a2), abs_tol=1e-12):
        assert abs(np.vdot(x, y)) == pytest.approx(1.0)


def test_path_gain_examples():
    assert path_gain([1.0, 0.0], CFG) == pytest.approx(CFG.alpha_ref_mag)
    assert abs(path_gain([10.0, 0.0], CFG)) == pytest.approx(5e-4 * 10 ** -1.1)
    assert abs(path_gain([10.0, 0.0], CFG)) == pytest.approx(3.97e-5, rel=1e-3)
    d = math.hypot(30, 125)
    assert d == pytest.approx(128.55, abs=0.01)
    assert abs(path_gain([30, 125], CFG)) == pytest.approx(2.4e-6, rel=0.01)
    with pytest.raises(ValueError):
        path_gain([0.0, 0.0], CFG)


@given(st.floats(1.0, 1e4), st.floats(1e-3, 100.0))
def test_path_gain_monotone_and_phase_period(d, extra):
    assert abs(path_gain([d + extra, 0], CFG)) < abs(path_gain([d, 0], CFG))
    a = path_gain([d, 0], CFG)
    b = path_gain([d + CFG.wavelength, 0], CFG)
    assert abs(wrap_angle(cmath.phase(b) - cmath.phase(a))) < 1e-6


def test_pose_to_channel_examples():
    s = pose_to_channel(Pose2([0, 0], 0.0), CFG)
    assert s.aod == pytest.approx(math.atan2(30, 125)) and s.aod == pytest.approx(0.2355, abs=1e-4)
    assert s.aoa == pytest.approx(wrap_angle(math.pi + s.aod))
    t = pose_to_channel(Pose2([0, 0], 0.1), CFG)
    assert t.aod == s.aod and wrap_angle(t.aoa - s.aoa) == pytest.approx(-0.1)
    north = pose_to_channel(Pose2([-30, 0], 0.0), CFG)
    assert north.aod == 0.0 and north.aoa == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        pose_to_channel(Pose2([-30, -125], 0.0), CFG)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-4, 4))
def test_yaw_aod_aoa_relation(x, y, th):
    if math.hypot(x + 30, y + 125) < 1e-3:
        return
    p = Pose2([x, y], th)
    s = pose_to_channel(p, CFG)
    assert abs(wrap_angle(p.theta - s.aod + s.aoa - math.pi)) < 1e-9
    back = channel_to_pose(s.reduced(), CFG)
    np.testing.assert_allclose(back.r, p.r, atol=1e-6 * max(1.0, np.abs(p.r).max()))
    assert abs(wrap_angle(back.theta - p.theta)) < 1e-9


@given(st.floats(-800, 800), st.floats(1, 800), st.floats(-800, 800), st.floats(1, 800))
def test_evolution_consistency_in_upper_half_plane(x0, y0, x1, y1):
    bs = CFG.bs
    p0, p1 = Pose2(bs + [x0, y0], 0.0), Pose2(bs + [x1, y1], 0.0)
    s0, s1 = pose_to_channel(p0, CFG), pose_to_channel(p1, CFG)
    rho = (math.hypot(x0, y0) / math.hypot(x1, y1)) ** (CFG.path_loss_exponent / 2)
    assert s1.alpha_mag == pytest.approx(rho * s0.alpha_mag, rel=1e-12)
    assert s1.aod - s0.aod == pytest.approx(math.atan(x1 / y1) - math.atan(x0 / y0), abs=1e-12)


def test_received_signal_noiseless_examples():
    s = pose_to_channel(Pose2([10, 20], 0.3), CFG)
    rng = np.random.default_rng(0)
    m = received_signal(s, tx_response(s.aod, CFG), rx_response(s.aoa, CFG), 1.0, 0.0, rng, CFG)
    assert m.z == pytest.approx(s.alpha, rel=1e-12)
    assert m.z_bar == pytest.approx(s.alpha_mag**2, rel=1e-12)
    a_t = tx_response(s.aod, CFG)
    f = np.array([1, 0, 0, 0], complex)
    f -= np.vdot(a_t, f) * a_t
    f /= np.linalg.norm(f)
    assert abs(received_signal(s, f, rx_response(s.aoa, CFG), 1.0, 0.0, rng, CFG).z) < 1e-20


def test_received_signal_matches_channel_matrix(rng):
    s = FullChannelState(3e-6, 0.7, 0.4, -1.1)
    f = rng.normal(size=4) + 1j * rng.normal(size=4)
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    f, g = f / np.linalg.norm(f), g / np.linalg.norm(g)
    b = cmath.exp(0.3j)
    H = los_channel_matrix(s, CFG)
    z = received_signal(s, f, g, b, 0.0, rng, CFG).z
    assert z == pytest.approx(np.vdot(g, H @ f) * b, rel=1e-12)


def test_received_power_mean_monte_carlo():
    s = pose_to_channel(Pose2([40, 60], 0.2), CFG)
    f = tx_response(s.aod + 0.05, CFG)
    g = rx_response(s.aoa - 0.08, CFG)
    want = abs(np.vdot(g, los_channel_matrix(s, CFG) @ f)) ** 2
    rng = np.random.default_rng(5)
    z_bar = np.array([received_signal(s, f, g, 1.0, CFG.noise_power, rng, CFG).z_bar for _ in range(100_000)])
    assert z_bar.mean() == pytest.approx(want, rel=0.02)


def test_measurement_variance_examples():
    assert measurement_variance(0.0, 1e-12) == pytest.approx(1e-24)
    assert measurement_variance(1e-11, 1e-12) == pytest.approx(2.1e-23)
    with pytest.raises(ValueError):
        measurement_variance(-1.0, 1e-12)


def test_state_containers():
    s = FullChannelState(2.0, 0.5, 0.1, 0.2)
    assert s.alpha == pytest.approx(cmath.rect(2.0, 0.5))
    np.testing.assert_array_equal(s.reduced().as_array(), [2.0, 0.1, 0.2])
    assert ReducedChannelState.from_array([1, 2, 3]) == ReducedChannelState(1.0, 2.0, 3.0)
