import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmesrise.controller import (
    ControllerState,
    GainConditionBounds,
    RiseGains,
    check_gain_condition,
    filtered_derivative,
    rise_output,
    rise_step,
    saturate,
    sgn,
)

GAINS = RiseGains(2.0, 3.0, 30.0, 2.5)


def test_gain_validation():
    with pytest.raises(ValueError):
        RiseGains(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        RiseGains(1.0, 1.0, math.inf, 1.0)
    with pytest.raises(ValueError):
        GainConditionBounds(-1.0, 0.0)
    assert RiseGains.from_sequence([1, 2, 3, 4]).as_tuple() == (1.0, 2.0, 3.0, 4.0)


def test_controller_state_validation():
    with pytest.raises(ValueError):
        ControllerState(tau=0.0)
    with pytest.raises(ValueError):
        ControllerState(rho_max=401.0)
    with pytest.raises(ValueError):
        ControllerState(rho_min=300.0, rho_max=300.0)


def gain_condition_truth_table():
    """(gains, bounds, expected satisfied, expected margin) rows."""
    b11 = GainConditionBounds(1.0, 1.0)
    return [
        (RiseGains(1.0, 2.0, 10.0, 2.0), b11, True, 0.5),
        (RiseGains(1.0, 2.0, 10.0, 1.5), b11, False, 0.0),
        (RiseGains(1.0, 2.0, 10.0, 1.0), b11, False, -0.5),
        (RiseGains(2.61, 3.34, 48.94, 1.78), GainConditionBounds(1.0, 2.0), True, 1.78 - 1.0 - 2.0 / 3.34),
    ]


def test_gain_condition_truth_table():
    for gains, bounds, sat, margin in gain_condition_truth_table():
        c = check_gain_condition(gains, bounds)
        assert c.satisfied is sat
        assert c.margin == pytest.approx(margin, abs=1e-12)
    # fixture row: a reported tuned gain set and its margin to three decimals
    c = check_gain_condition(RiseGains(2.61, 3.34, 48.94, 1.78), GainConditionBounds(1.0, 2.0))
    assert c.margin == pytest.approx(0.181, abs=5e-4)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 5))
def test_margin_affine_in_beta_with_unit_slope(alpha2, beta, delta):
    b = GainConditionBounds(0.7, 1.3)
    m1 = check_gain_condition(RiseGains(1.0, alpha2, 10.0, beta), b).margin
    m2 = check_gain_condition(RiseGains(1.0, alpha2, 10.0, beta + delta), b).margin
    assert m2 - m1 == pytest.approx(delta, abs=1e-12)


def test_saturate_examples():
    cs = ControllerState(rho_max=300.0)
    assert saturate(-5.0, cs) == 0.0
    assert saturate(500.0, cs) == 300.0
    assert saturate(150.0, cs) == 150.0


def test_sgn():
    assert (sgn(2.0), sgn(-0.1), sgn(0.0)) == (1.0, -1.0, 0.0)


def test_filter_constant_input_gives_zero():
    cs = ControllerState()
    assert all(filtered_derivative(0.7, cs, 0.005) == 0.0 for _ in range(50))


def ramp_settling_error(tau=0.01, dt=0.001, slope=2.0, horizon_taus=5.0):
    """Relative error of the filtered ramp derivative at t = horizon_taus * tau."""
    cs = ControllerState(tau=tau)
    n = int(round(horizon_taus * tau / dt))
    y = 0.0
    for k in range(n + 1):
        y = filtered_derivative(slope * k * dt, cs, dt)
    return abs(y - slope) / slope


def test_filter_ramp_response_within_one_percent_after_five_tau():
    for dt in (1e-4, 5e-4, 1e-3):
        assert ramp_settling_error(dt=dt) < 0.01


def test_filter_ramp_at_control_rate_converges():
    # at dt = tau / 2 the backward-Euler pole lags the continuous one; 6 tau suffices
    assert ramp_settling_error(dt=0.005) > 0.01
    assert ramp_settling_error(dt=0.005, horizon_taus=6.0) < 0.01


def test_filter_sine_amplitude():
    tau, dt = 0.01, 0.005
    w = 2 * math.pi
    cs = ControllerState(tau=tau)
    out = np.array([filtered_derivative(math.sin(w * k * dt), cs, dt) for k in range(int(10 / dt))])
    steady = out[int(5 / dt):]
    expected = w / math.sqrt(1 + (w * tau) ** 2)
    assert np.max(np.abs(steady)) == pytest.approx(expected, rel=0.02)


def test_filter_rejects_bad_input():
    cs = ControllerState()
    with pytest.raises(ValueError):
        filtered_derivative(math.nan, cs, 0.005)
    with pytest.raises(ValueError):
        filtered_derivative(0.0, cs, 0.0)


def discrete_integral_error(eps=0.01, steps=200, dt=0.005, gains=GAINS):
    """Max deviation of the filter-bypassed law from u_k = k ((ks+1) alpha2 eps + beta) dt."""
    cs = ControllerState(rho_max=400.0)
    rate = (gains.ks + 1) * gains.alpha2 * eps + gains.beta
    worst = 0.0
    for k in range(steps):
        u = rise_output(eps, gains, cs, dt, first=(k == 0))
        assert not cs.saturated
        worst = max(worst, abs(u - k * rate * dt))
    return worst


def test_discrete_integral_matches_closed_form():
    assert discrete_integral_error() <= 1e-9


def test_first_call_on_target_outputs_zero():
    cs = ControllerState()
    assert rise_step(0.3, 0.3, 0.0, GAINS, cs, 0.005) == 0.0
    assert cs.integral_acc == 0.0 and cs.initialized


def test_zero_error_stream_keeps_integral_zero():
    cs = ControllerState()
    for _ in range(500):
        assert rise_step(0.4, 0.4, 0.0, GAINS, cs, 0.005) == 0.0
    assert cs.integral_acc == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=200),
       st.floats(50.0, 400.0))
def test_output_always_within_saturation(stream, rho_max):
    cs = ControllerState(rho_max=rho_max)
    gains = RiseGains(5.0, 5.0, 80.0, 6.0)
    for theta, theta_d in stream:
        u = rise_step(theta, theta_d, 0.0, gains, cs, 0.005)
        assert 0.0 <= u <= rho_max
        assert math.isfinite(cs.integral_acc)


def test_anti_windup_freezes_integral_in_saturation():
    cs = ControllerState(rho_max=100.0)
    gains = RiseGains(1.0, 5.0, 50.0, 3.0)
    e2 = 0.2
    entry = None
    for k in range(2000):
        rise_output(e2, gains, cs, 0.005, first=(k == 0))
        if cs.saturated and entry is None:
            entry = cs.integral_acc
        if entry is not None:
            assert cs.saturated
            assert cs.integral_acc <= entry
    assert entry is not None


def test_anti_windup_releases_quickly():
    # after long saturation a sign change in e2 must bring u off the rail within a few steps
    cs = ControllerState(rho_max=100.0)
    gains = RiseGains(1.0, 5.0, 50.0, 3.0)
    for k in range(2000):
        rise_output(0.2, gains, cs, 0.005, first=(k == 0))
    for k in range(5):
        u = rise_output(-0.05, gains, cs, 0.005)
    assert u < 100.0


def test_determinism():
    rng = np.random.default_rng(3)
    stream = rng.uniform(-0.5, 0.5, (300, 2))

    def run():
        cs = ControllerState()
        return [rise_step(a, b, 0.0, GAINS, cs, 0.005) for a, b in stream]

    assert run() == run()


def test_reset_and_fresh():
    cs = ControllerState(tau=0.02, rho_max=250.0)
    for _ in range(10):
        rise_step(0.0, 0.3, 0.0, GAINS, cs, 0.005)
    fresh = cs.fresh()
    cs.reset()
    assert cs == fresh
    assert (fresh.tau, fresh.rho_max) == (0.02, 250.0)


def test_rise_step_rejects_non_finite():
    with pytest.raises(ValueError):
        rise_step(math.inf, 0.0, 0.0, GAINS, ControllerState(), 0.005)
