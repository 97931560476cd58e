"""Closed-loop rollouts of the RISE controller against a plant or an identified model.

A *system* is anything with a ``sample_period`` and a ``closed_loop`` method;
:class:`PlantSystem` wraps the physical model, :class:`NarxSystem` an
identified network. Both dispatch to the kernels selected in
:mod:`nmesrise.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controller import ControllerState, RiseGains
from .ident import NarxModel
from .plant import NO_DISTURBANCE, DisturbanceModel, PlantParams
from .reference import TrajectorySpec, reference_series, time_grid

CONTROL_PERIOD = 0.005


@dataclass
class Rollout:
    t: np.ndarray
    theta: np.ndarray
    theta_d: np.ndarray
    u: np.ndarray
    u_raw: np.ndarray
    diverged: bool
    rho_max: float

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def saturated_fraction(self) -> float:
        if self.n == 0:
            return 0.0
        hit = (self.u_raw > self.rho_max) | (self.u_raw < 0.0)
        return float(np.count_nonzero(hit)) / self.n


def _truncate(t, theta_d, u, raw, theta, done):
    return t[:done], theta[:done], theta_d[:done], u[:done], raw[:done]


@dataclass
class PlantSystem:
    params: PlantParams = field(default_factory=PlantParams)
    disturbance: DisturbanceModel = NO_DISTURBANCE
    sample_period: float = CONTROL_PERIOD
    substeps: int = 1
    theta0: float = 0.0

    def closed_loop(self, gains: RiseGains, spec: TrajectorySpec, controller: ControllerState | None = None,
                    horizon: float | None = None) -> Rollout:
        cs = controller or ControllerState()
        t = time_grid(min(horizon or spec.duration, spec.duration), self.sample_period)
        theta_d, theta_d_dot = reference_series(spec, t)
        u, raw, theta, done = kernels.plant_closed_loop(self.params, self.disturbance, gains, cs, theta_d,
                                                        theta_d_dot, self.sample_period, self.substeps, self.theta0)
        parts = _truncate(t, theta_d, u, raw, theta, done)
        return Rollout(*parts, diverged=done < t.shape[0], rho_max=cs.rho_max)

    def open_loop(self, u, sample_period: float, substeps: int = 1) -> tuple[np.ndarray, bool]:
        """Angle sampled at the start of each hold period; second item flags divergence."""
        theta, _, done = kernels.plant_open_loop(self.params, self.disturbance, u, sample_period, substeps,
                                                 self.theta0)
        return theta[:done], done < len(u)


@dataclass
class NarxSystem:
    model: NarxModel
    theta0: float = 0.0

    @property
    def sample_period(self) -> float:
        return self.model.sample_period

    def closed_loop(self, gains: RiseGains, spec: TrajectorySpec, controller: ControllerState | None = None,
                    horizon: float | None = None) -> Rollout:
        cs = controller or ControllerState()
        t = time_grid(min(horizon or spec.duration, spec.duration), self.sample_period)
        theta_d, theta_d_dot = reference_series(spec, t)
        u, raw, theta, done = kernels.narx_closed_loop(self.model, gains, cs, theta_d, theta_d_dot,
                                                       self.sample_period, self.theta0)
        parts = _truncate(t, theta_d, u, raw, theta, done)
        return Rollout(*parts, diverged=done < t.shape[0], rho_max=cs.rho_max)
