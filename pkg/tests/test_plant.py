import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmesrise import kernels
from nmesrise.plant import (
    DisturbanceModel,
    PlantParams,
    PlantState,
    StimMapParams,
    disturbance,
    elastic_torque,
    gravitational_torque,
    mechanical_energy,
    step,
    stimulation_torque,
    viscous_torque,
)

GRAVITY_ONLY = PlantParams(psi1=0.0, psi2=0.0, kappa1=0.0, kappa2=0.0, kappa3=0.0)


def params_with_mgl(mgl):
    return PlantParams(m=mgl, l=1.0, g=1.0)


def test_gravitational_examples():
    p = params_with_mgl(10.0)
    assert gravitational_torque(0.0, PlantParams()) == 0.0
    assert gravitational_torque(math.pi / 2, p) == pytest.approx(-10.0, abs=1e-12)
    assert gravitational_torque(-math.pi / 2, p) == pytest.approx(10.0, abs=1e-12)


@given(st.floats(-10, 10))
def test_gravitational_torque_is_odd(theta):
    p = PlantParams()
    assert gravitational_torque(-theta, p) == -gravitational_torque(theta, p)


def test_elastic_examples():
    assert elastic_torque(0.3, PlantParams(psi3=0.3)) == 0.0
    assert elastic_torque(0.6, PlantParams(psi1=2.0, psi2=0.0, psi3=0.1)) == pytest.approx(-1.0, abs=1e-12)
    assert elastic_torque(1.0, PlantParams(psi1=2.0, psi2=1.0, psi3=0.0)) == pytest.approx(-2 * math.exp(-1), abs=1e-12)


def test_viscous_examples():
    for conv in ("verbatim", "dissipative"):
        assert viscous_torque(0.0, PlantParams(viscous_convention=conv)) == 0.0
    verbatim = PlantParams(kappa1=1.0, kappa2=1e6, kappa3=0.0, viscous_convention="verbatim")
    assert viscous_torque(1.0, verbatim) == pytest.approx(1.0, abs=1e-12)
    linear = PlantParams(kappa1=0.0, kappa3=2.0)
    assert viscous_torque(0.5, linear) == pytest.approx(-1.0, abs=1e-12)


@given(st.floats(-20, 20).filter(lambda w: abs(w) > 1e-6))
def test_dissipative_viscous_opposes_motion(w):
    assert viscous_torque(w, PlantParams()) * w < 0


def test_stimulation_examples():
    flat = PlantParams(stim_map=StimMapParams(c1=0.01, c2=0.0, c3=0.0))
    assert stimulation_torque(0.4, 1.0, 0.0, PlantParams()) == 0.0
    assert stimulation_torque(0.0, 0.0, 100.0, flat) == pytest.approx(1.0, abs=1e-12)
    tilted = PlantParams(stim_map=StimMapParams(c1=0.01, c2=0.5, c3=0.0))
    assert stimulation_torque(math.pi / 2, 0.0, 100.0, tilted) == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(ValueError):
        stimulation_torque(0.0, 0.0, -1.0, PlantParams())


@given(st.floats(-math.pi, math.pi), st.floats(-10, 10))
def test_stimulation_monotone_in_pulse_width(theta, w):
    u = np.linspace(0.0, 400.0, 100)
    tau = [stimulation_torque(theta, w, x, PlantParams()) for x in u]
    assert np.all(np.diff(tau) > 0)


def test_disturbance_examples():
    assert disturbance(12.3, DisturbanceModel()) == (0.0, 1.0)
    add, scale = disturbance(30.0, DisturbanceModel("fatigue", fatigue_tau=30.0))
    assert add == 0.0 and scale == pytest.approx(math.exp(-1), abs=1e-12)
    add, scale = disturbance(0.05, DisturbanceModel("tremor", tremor_amp=0.2, tremor_freq=5.0))
    assert add == pytest.approx(0.2, abs=1e-12) and scale == 1.0
    add, scale = disturbance(0.05, DisturbanceModel("composite", fatigue_tau=10.0, tremor_amp=0.2, tremor_freq=5.0))
    assert add == pytest.approx(0.2, abs=1e-12) and scale == pytest.approx(math.exp(-0.005), abs=1e-12)
    with pytest.raises(ValueError):
        disturbance(-1.0, DisturbanceModel())


def test_parameter_validation():
    with pytest.raises(ValueError):
        PlantParams(J=0.0)
    with pytest.raises(ValueError):
        PlantParams(kappa1=-1.0)
    with pytest.raises(ValueError):
        StimMapParams(c2=1.0)
    with pytest.raises(ValueError):
        DisturbanceModel("fatigue", fatigue_tau=0.0)
    with pytest.raises(ValueError):
        DisturbanceModel(tremor_amp=-0.1)
    with pytest.raises(ValueError):
        PlantState(theta=math.nan)


def test_step_rejects_bad_inputs():
    s = PlantState()
    with pytest.raises(ValueError):
        step(s, 10.0, 0.0, PlantParams())
    with pytest.raises(ValueError):
        step(s, 401.0, 0.01, PlantParams())
    with pytest.raises(ValueError):
        step(s, -1.0, 0.01, PlantParams())


def test_rest_is_fixed_point():
    s = PlantState()
    for _ in range(100):
        s = step(s, 0.0, 0.005, PlantParams())
    assert s.theta == 0.0 and s.theta_dot == 0.0
    assert s.t == pytest.approx(0.5, abs=1e-12)


def test_small_angle_pendulum_oracle():
    p = GRAVITY_ONLY
    omega = math.sqrt(p.mgl / p.J)
    dt = 1e-3
    n = int(round(2 * math.pi / omega / dt))
    s = PlantState(theta=0.01)
    worst = 0.0
    for k in range(1, n + 1):
        s = step(s, 0.0, dt, p)
        worst = max(worst, abs(s.theta - 0.01 * math.cos(omega * k * dt)))
    assert worst < 1e-6


def _end_state(dt, horizon, theta0, substeps=1):
    n = int(round(horizon / dt))
    theta, omega, done = kernels.plant_open_loop(GRAVITY_ONLY, DisturbanceModel(), np.zeros(n + 1), dt,
                                                 substeps, theta0)
    assert done == n + 1
    return np.array([theta[n], omega[n]])


def rk4_order(theta0=0.8, horizon=1.0, dt=0.01):
    """Observed order from three step sizes: successive differences shrink as dt**p."""
    coarse, mid, fine = (_end_state(h, horizon, theta0) for h in (dt, dt / 2, dt / 4))
    return math.log2(np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine))


def test_rk4_measured_order():
    assert 3.8 <= rk4_order() <= 4.2


def test_rk4_python_step_matches_kernel():
    s = PlantState(theta=0.3, theta_dot=-0.2)
    p = PlantParams()
    model = DisturbanceModel("composite", fatigue_tau=20.0, tremor_amp=0.1, tremor_freq=3.0)
    th, om, _ = kernels.plant_open_loop(p, model, np.full(51, 120.0), 0.005, 1, s.theta, s.theta_dot)
    for _ in range(50):
        s = step(s, 120.0, 0.005, p, model)
    assert abs(s.theta - th[50]) < 1e-14 and abs(s.theta_dot - om[50]) < 1e-13


def max_energy_increase(theta0=0.9, omega0=-1.5, steps=5000, dt=1e-3, params=PlantParams()):
    s = PlantState(theta0, omega0)
    e_prev = mechanical_energy(s, params)
    worst = -math.inf
    for _ in range(steps):
        s = step(s, 0.0, dt, params)
        e = mechanical_energy(s, params)
        worst = max(worst, e - e_prev)
        e_prev = e
    return worst


def test_energy_non_increasing_dissipative():
    assert max_energy_increase() <= 1e-9


def test_verbatim_convention_injects_energy():
    assert max_energy_increase(params=PlantParams(viscous_convention="verbatim"), steps=200) > 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-3, 3))
def test_energy_property_random_start(theta0, omega0):
    assert max_energy_increase(theta0, omega0, steps=300) <= 1e-9


def test_elastic_potential_matches_quadrature():
    from nmesrise.plant import elastic_potential

    for p in (PlantParams(psi1=2.0, psi2=1.3, psi3=0.2), PlantParams(psi1=1.5, psi2=0.0, psi3=0.1)):
        x = np.linspace(0.0, 1.1, 200_001)
        f = p.psi1 * (x - p.psi3) * np.exp(-p.psi2 * x)
        quad = float(np.sum((f[1:] + f[:-1]) * 0.5 * np.diff(x)))
        assert elastic_potential(1.1, p) == pytest.approx(quad, abs=1e-9)
