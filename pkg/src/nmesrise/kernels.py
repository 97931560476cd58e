"""Backend selection for the rollout kernels.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
pure-Python ``_pykernels`` take over. Set ``NMESRISE_PURE_PYTHON=1`` to force
the fallback. :data:`BACKEND` names the active one.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from .controller import ControllerState, RiseGains
from .plant import DisturbanceModel, PlantParams

try:
    if os.environ.get("NMESRISE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def pack_plant(params: PlantParams) -> np.ndarray:
    s = params.stim_map
    return np.array([
        params.J, params.m, params.l, params.g,
        params.psi1, params.psi2, params.psi3,
        params.kappa1, params.kappa2, params.kappa3,
        1.0 if params.viscous_convention == "dissipative" else 0.0,
        s.c1, s.c2, s.c3, s.c4,
    ])


def pack_disturbance(model: DisturbanceModel) -> np.ndarray:
    return np.array([
        1.0 if model.has_fatigue else 0.0, model.fatigue_tau,
        1.0 if model.has_tremor else 0.0, model.tremor_amp, model.tremor_freq,
    ])


def pack_gains(gains: RiseGains) -> np.ndarray:
    return np.array(gains.as_tuple(), dtype=float)


def pack_controller(cs: ControllerState) -> np.ndarray:
    return np.array([cs.tau, cs.rho_min, cs.rho_max])


def get_backend(name: str | None = None):
    """Kernel module by name (``"cython"`` / ``"python"``); ``None`` is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _f(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=float)


def plant_open_loop(params, disturbance, u, dt, substeps=1, theta0=0.0, omega0=0.0, backend=None):
    k = get_backend(backend)
    return k.plant_open_loop(pack_plant(params), pack_disturbance(disturbance), _f(u), float(dt), int(substeps),
                             float(theta0), float(omega0))


def plant_closed_loop(params, disturbance, gains, controller, theta_d, theta_d_dot, dt, substeps=1,
                      theta0=0.0, omega0=0.0, backend=None):
    k = get_backend(backend)
    return k.plant_closed_loop(pack_plant(params), pack_disturbance(disturbance), pack_gains(gains),
                               pack_controller(controller), _f(theta_d), _f(theta_d_dot), float(dt), int(substeps),
                               float(theta0), float(omega0))


def narx_free_run(model, u_n, y_init_n, limit_n, backend=None):
    k = get_backend(backend)
    return k.narx_free_run(_f(model.weights_in), _f(model.bias_in), _f(model.weights_out), int(model.lag_m),
                           int(model.lag_n), model.activation == "linear", _f(u_n), _f(y_init_n), float(limit_n))


def narx_closed_loop(model, gains, controller, theta_d, theta_d_dot, dt, theta0=0.0, backend=None):
    k = get_backend(backend)
    return k.narx_closed_loop(_f(model.weights_in), _f(model.bias_in), _f(model.weights_out), int(model.lag_m),
                              int(model.lag_n), model.activation == "linear", float(model.input_norm),
                              float(model.output_norm), pack_gains(gains), pack_controller(controller),
                              _f(theta_d), _f(theta_d_dot), float(dt), float(theta0))
