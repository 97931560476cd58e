"""Knee-joint dynamics under electrical stimulation.

The shank-foot segment is modelled as a single rigid pendulum about the knee::

    J * theta_ddot = tau_grav + tau_elastic + tau_viscous + tau_dist + tau_stim

``theta`` is measured from the resting position with extension positive. The
stimulation torque is the product of a bounded, strictly positive recruitment
map and the pulse width ``u`` (microseconds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

ViscousConvention = Literal["verbatim", "dissipative"]
DisturbanceKind = Literal["none", "fatigue", "tremor", "composite"]

PW_CEILING_US = 400.0


@dataclass(frozen=True)
class StimMapParams:
    """Recruitment map ``Psi(theta, theta_dot) = c1 (1 + c2 sin theta)(1 - c3 tanh(c4 theta_dot))``."""

    c1: float = 0.025
    c2: float = 0.3
    c3: float = 0.2
    c4: float = 1.0

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError(f"stimulation gain c1 must be positive, got {self.c1}")
        if not abs(self.c2) < 1:
            raise ValueError(f"|c2| must be < 1, got {self.c2}")
        if not 0 <= self.c3 < 1:
            raise ValueError(f"c3 must lie in [0, 1), got {self.c3}")
        if not math.isfinite(self.c4):
            raise ValueError("c4 must be finite")


@dataclass(frozen=True)
class PlantParams:
    J: float = 0.362
    m: float = 4.37
    l: float = 0.238
    g: float = 9.81
    psi1: float = 2.02
    psi2: float = 1.0
    psi3: float = 0.0
    kappa1: float = 0.25
    kappa2: float = 5.0
    kappa3: float = 0.27
    viscous_convention: ViscousConvention = "dissipative"
    stim_map: StimMapParams = field(default_factory=StimMapParams)

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"inertia J must be positive, got {self.J}")
        for name in ("m", "l", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("psi1", "psi2", "kappa1", "kappa2", "kappa3"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not math.isfinite(self.psi3):
            raise ValueError("psi3 must be finite")
        if self.viscous_convention not in ("verbatim", "dissipative"):
            raise ValueError(f"unknown viscous convention {self.viscous_convention!r}")

    @property
    def mgl(self) -> float:
        return self.m * self.g * self.l


@dataclass(frozen=True)
class PlantState:
    theta: float = 0.0
    theta_dot: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.theta_dot) and math.isfinite(self.t)):
            raise ValueError(f"non-finite plant state {self}")


@dataclass(frozen=True)
class DisturbanceModel:
    """Fatigue scales the stimulation torque by ``exp(-t / fatigue_tau)``; tremor adds a sinusoid."""

    kind: DisturbanceKind = "none"
    fatigue_tau: float = 30.0
    tremor_amp: float = 0.0
    tremor_freq: float = 5.0

    def __post_init__(self):
        if self.kind not in ("none", "fatigue", "tremor", "composite"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind in ("fatigue", "composite") and not self.fatigue_tau > 0:
            raise ValueError("fatigue_tau must be positive when fatigue is active")
        if not self.tremor_amp >= 0:
            raise ValueError("tremor_amp must be non-negative")

    @property
    def has_fatigue(self) -> bool:
        return self.kind in ("fatigue", "composite")

    @property
    def has_tremor(self) -> bool:
        return self.kind in ("tremor", "composite")


NO_DISTURBANCE = DisturbanceModel()


def gravitational_torque(theta: float, params: PlantParams) -> float:
    return -params.m * params.g * params.l * math.sin(theta)


def elastic_torque(theta: float, params: PlantParams) -> float:
    return -(params.psi1 * theta - params.psi1 * params.psi3) * math.exp(-params.psi2 * theta)


def viscous_torque(theta_dot: float, params: PlantParams) -> float:
    """Joint damping torque.

    ``verbatim`` keeps the printed sign pattern ``-k1 tanh(-k2 w) + k3 w``, which
    injects energy; ``dissipative`` is ``-(k1 tanh(k2 w) + k3 w)``.
    """
    if params.viscous_convention == "verbatim":
        return -params.kappa1 * math.tanh(-params.kappa2 * theta_dot) + params.kappa3 * theta_dot
    return -(params.kappa1 * math.tanh(params.kappa2 * theta_dot) + params.kappa3 * theta_dot)


def recruitment(theta: float, theta_dot: float, stim: StimMapParams) -> float:
    return stim.c1 * (1.0 + stim.c2 * math.sin(theta)) * (1.0 - stim.c3 * math.tanh(stim.c4 * theta_dot))


def stimulation_torque(
    theta: float,
    theta_dot: float,
    u: float,
    params: PlantParams,
    disturbance_scale: float = 1.0,
) -> float:
    if u < 0:
        raise ValueError(f"pulse width must be non-negative, got {u}")
    return disturbance_scale * recruitment(theta, theta_dot, params.stim_map) * u


def disturbance(t: float, model: DisturbanceModel) -> tuple[float, float]:
    """Return ``(additive_torque, stim_scale)`` at time ``t``."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    additive = 0.0
    scale = 1.0
    if model.has_fatigue:
        scale = math.exp(-t / model.fatigue_tau)
    if model.has_tremor:
        additive = model.tremor_amp * math.sin(2.0 * math.pi * model.tremor_freq * t)
    return additive, scale


def acceleration(
    theta: float,
    theta_dot: float,
    t: float,
    u: float,
    params: PlantParams,
    model: DisturbanceModel = NO_DISTURBANCE,
) -> float:
    additive, scale = disturbance(t, model)
    total = (
        gravitational_torque(theta, params)
        + elastic_torque(theta, params)
        + viscous_torque(theta_dot, params)
        + additive
        + stimulation_torque(theta, theta_dot, u, params, scale)
    )
    return total / params.J


def step(
    state: PlantState,
    u: float,
    dt: float,
    params: PlantParams,
    model: DisturbanceModel = NO_DISTURBANCE,
) -> PlantState:
    """Advance one classical RK4 step with ``u`` held over ``[t, t + dt)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not 0.0 <= u <= PW_CEILING_US:
        raise ValueError(f"pulse width {u} outside [0, {PW_CEILING_US}] us")
    th, w, t = state.theta, state.theta_dot, state.t
    h = 0.5 * dt

    k1_th = w
    k1_w = acceleration(th, w, t, u, params, model)
    k2_th = w + h * k1_w
    k2_w = acceleration(th + h * k1_th, w + h * k1_w, t + h, u, params, model)
    k3_th = w + h * k2_w
    k3_w = acceleration(th + h * k2_th, w + h * k2_w, t + h, u, params, model)
    k4_th = w + dt * k3_w
    k4_w = acceleration(th + dt * k3_th, w + dt * k3_w, t + dt, u, params, model)

    return PlantState(
        theta=th + dt / 6.0 * (k1_th + 2.0 * k2_th + 2.0 * k3_th + k4_th),
        theta_dot=w + dt / 6.0 * (k1_w + 2.0 * k2_w + 2.0 * k3_w + k4_w),
        t=t + dt,
    )


def mechanical_energy(state: PlantState, params: PlantParams) -> float:
    """Kinetic + gravitational + elastic potential energy, zero at rest when ``psi3 = 0``."""
    th = state.theta
    kinetic = 0.5 * params.J * state.theta_dot**2
    gravity = params.mgl * (1.0 - math.cos(th))
    return kinetic + gravity + elastic_potential(th, params)


def elastic_potential(theta: float, params: PlantParams) -> float:
    # V(theta) = int_0^theta psi1 (s - psi3) exp(-psi2 s) ds
    p1, p2, p3 = params.psi1, params.psi2, params.psi3
    if p2 == 0.0:
        return p1 * (0.5 * theta**2 - p3 * theta)
    e = math.exp(-p2 * theta)
    # int s e^{-a s} = (1 - e^{-a x}(1 + a x)) / a^2 ; int e^{-a s} = (1 - e^{-a x}) / a
    return p1 * ((1.0 - e * (1.0 + p2 * theta)) / p2**2 - p3 * (1.0 - e) / p2)

