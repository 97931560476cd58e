"""Discrete RISE (robust integral of the sign of the error) tracking controller.

The control law, with tracking error ``e1 = theta_d - theta`` and
``e2 = de1/dt + alpha1 * e1``, is::

    u(t) = (ks + 1) e2(t) - (ks + 1) e2(0)
           + int_0^t [(ks + 1) alpha2 e2(s) + beta sgn(e2(s))] ds

``de1/dt`` comes from a first-order filtered derivative ``s / (tau s + 1)``
discretized with backward Euler; the integral uses the trapezoidal rule with
conditional-integration anti-windup. The output is clamped to ``[0, rho_max]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RiseGains:
    alpha1: float
    alpha2: float
    ks: float
    beta: float

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"gain {name} must be a positive finite number, got {value}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.ks, self.beta)

    def as_dict(self) -> dict[str, float]:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "ks": self.ks, "beta": self.beta}

    @classmethod
    def from_sequence(cls, values) -> RiseGains:
        a1, a2, ks, beta = (float(v) for v in values)
        return cls(a1, a2, ks, beta)


@dataclass(frozen=True)
class GainConditionBounds:
    """Upper bounds on the lumped disturbance term and its time derivative."""

    e_wd: float = 1.0
    e_wd_dot: float = 1.0

    def __post_init__(self):
        if self.e_wd < 0 or self.e_wd_dot < 0:
            raise ValueError("gain-condition bounds must be non-negative")


@dataclass(frozen=True)
class GainCondition:
    satisfied: bool
    margin: float


def check_gain_condition(gains: RiseGains, bounds: GainConditionBounds) -> GainCondition:
    """Sufficient stability condition ``beta > e_wd + e_wd_dot / alpha2``.

    ``margin`` is ``beta - rhs``; an exact tie is reported as not satisfied.
    """
    rhs = bounds.e_wd + bounds.e_wd_dot / gains.alpha2
    margin = gains.beta - rhs
    return GainCondition(satisfied=margin > 0.0, margin=margin)


@dataclass
class ControllerState:
    tau: float = 0.01
    rho_min: float = 0.0
    rho_max: float = 300.0
    e1_prev: float = 0.0
    deriv_filter_state: float = 0.0
    e2_init: float = 0.0
    e2_prev: float = 0.0
    integrand_prev: float = 0.0
    integral_acc: float = 0.0
    u_raw: float = 0.0
    u_prev: float = 0.0
    saturated: bool = False
    initialized: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"derivative filter tau must be positive, got {self.tau}")
        if not 0.0 <= self.rho_min < self.rho_max <= 400.0:
            raise ValueError(
                f"need 0 <= rho_min < rho_max <= 400 us, got rho_min={self.rho_min}, rho_max={self.rho_max}"
            )

    def reset(self) -> None:
        """Clear all signal memory; keeps tau and the saturation range."""
        self.e1_prev = 0.0
        self.deriv_filter_state = 0.0
        self.e2_init = 0.0
        self.e2_prev = 0.0
        self.integrand_prev = 0.0
        self.integral_acc = 0.0
        self.u_raw = 0.0
        self.u_prev = 0.0
        self.saturated = False
        self.initialized = False

    def fresh(self) -> ControllerState:
        return ControllerState(tau=self.tau, rho_min=self.rho_min, rho_max=self.rho_max)


def sgn(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def saturate(u_raw: float, cs: ControllerState) -> float:
    if u_raw < 0.0:
        return 0.0
    if u_raw > cs.rho_max:
        return cs.rho_max
    return u_raw


def filtered_derivative(x_k: float, cs: ControllerState, dt: float) -> float:
    """Backward-Euler discretization of ``s / (tau s + 1)``.

    The first call after a reset returns 0 and only seeds the input memory.
    Uses ``cs.initialized`` as the seed flag, so callers that drive the filter
    standalone must not also run :func:`rise_step` on the same state.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(x_k):
        raise ValueError(f"non-finite filter input {x_k}")
    if not cs.initialized:
        y = 0.0
    else:
        y = (cs.deriv_filter_state * cs.tau + (x_k - cs.e1_prev)) / (cs.tau + dt)
    cs.deriv_filter_state = y
    cs.e1_prev = x_k
    cs.initialized = True
    return y


def rise_output(e2: float, gains: RiseGains, cs: ControllerState, dt: float, first: bool = False) -> float:
    """Apply the RISE law to an already formed ``e2`` sample.

    ``first=True`` latches ``e2(0)`` and starts the integral at zero. Split out
    from :func:`rise_step` so the integral can be exercised with the
    derivative filter bypassed.
    """
    gain = gains.ks + 1.0
    integrand = gain * gains.alpha2 * e2 + gains.beta * sgn(e2)
    if first:
        cs.e2_init = e2
        cs.integral_acc = 0.0
        candidate = 0.0
    else:
        candidate = cs.integral_acc + 0.5 * dt * (integrand + cs.integrand_prev)
    proportional = gain * e2 - gain * cs.e2_init
    raw = proportional + candidate
    # conditional integration: the accumulator is not advanced while the demand
    # is past a rail and the integrand pushes further out
    if not ((raw > cs.rho_max and integrand > 0.0) or (raw < 0.0 and integrand < 0.0)):
        cs.integral_acc = candidate
    u = saturate(raw, cs)
    cs.integrand_prev = integrand
    cs.e2_prev = e2
    cs.u_raw = raw
    cs.saturated = raw != u
    cs.u_prev = u
    return u


def rise_step(
    theta: float,
    theta_d: float,
    theta_d_dot: float,
    gains: RiseGains,
    cs: ControllerState,
    dt: float,
) -> float:
    """One control period: measured angle in, pulse width (us) out.

    ``theta_d_dot`` is accepted so reference tuples can be passed straight
    through; the error derivative is taken from the filtered ``e1`` signal.
    """
    if not (math.isfinite(theta) and math.isfinite(theta_d) and math.isfinite(theta_d_dot)):
        raise ValueError("non-finite controller input")
    first = not cs.initialized
    e1 = theta_d - theta
    e1_dot = filtered_derivative(e1, cs, dt)
    e2 = e1_dot + gains.alpha1 * e1
    return rise_output(e2, gains, cs, dt, first=first)
