"""Pure-Python rollout kernels.

Reference implementation of the compiled kernels in ``_ckernels.pyx``; both
take the same packed float arrays (see ``kernels.pack_*``) and return the same
tuples. This version is assembled from the public per-step API, so it is the
one the compiled port is checked against.
"""

import math

import numpy as np

from .controller import ControllerState, RiseGains, rise_step
from .plant import DisturbanceModel, PlantParams, PlantState, StimMapParams, step

ANGLE_LIMIT = math.pi


def _unpack_plant(pv):
    return PlantParams(
        J=pv[0], m=pv[1], l=pv[2], g=pv[3],
        psi1=pv[4], psi2=pv[5], psi3=pv[6],
        kappa1=pv[7], kappa2=pv[8], kappa3=pv[9],
        viscous_convention="dissipative" if pv[10] else "verbatim",
        stim_map=StimMapParams(pv[11], pv[12], pv[13], pv[14]),
    )


def _unpack_disturbance(dv):
    fatigue, tremor = bool(dv[0]), bool(dv[2])
    kind = {(False, False): "none", (True, False): "fatigue",
            (False, True): "tremor", (True, True): "composite"}[(fatigue, tremor)]
    return DisturbanceModel(kind=kind, fatigue_tau=dv[1] if fatigue else 30.0, tremor_amp=dv[3], tremor_freq=dv[4])


def _controller(cv):
    return ControllerState(tau=cv[0], rho_min=cv[1], rho_max=cv[2])


def plant_open_loop(pv, dv, u, dt, substeps, theta0, omega0):
    """Sample-and-hold open-loop rollout; returns ``(theta, omega, n_done)``."""
    params, dist = _unpack_plant(pv), _unpack_disturbance(dv)
    n = len(u)
    theta = np.zeros(n)
    omega = np.zeros(n)
    h = dt / substeps
    state = PlantState(theta0, omega0, 0.0)
    for k in range(n):
        theta[k] = state.theta
        omega[k] = state.theta_dot
        try:
            for _ in range(substeps):
                state = step(state, float(u[k]), h, params, dist)
        except ValueError:
            return theta, omega, k + 1
        if abs(state.theta) > ANGLE_LIMIT:
            return theta, omega, k + 1
    return theta, omega, n


def plant_closed_loop(pv, dv, gv, cv, theta_d, theta_d_dot, dt, substeps, theta0, omega0):
    """RISE + plant rollout; returns ``(u, u_raw, theta, n_done)``.

    Row ``k`` holds the angle measured at ``k*dt`` and the command applied over
    the following period. ``n_done < len(theta_d)`` flags divergence.
    """
    params, dist = _unpack_plant(pv), _unpack_disturbance(dv)
    gains = RiseGains(*gv)
    cs = _controller(cv)
    n = len(theta_d)
    u_out = np.zeros(n)
    raw_out = np.zeros(n)
    theta = np.zeros(n)
    h = dt / substeps
    state = PlantState(theta0, omega0, 0.0)
    for k in range(n):
        theta[k] = state.theta
        u = rise_step(state.theta, float(theta_d[k]), float(theta_d_dot[k]), gains, cs, dt)
        u_out[k] = u
        raw_out[k] = cs.u_raw
        try:
            for _ in range(substeps):
                state = step(state, u, h, params, dist)
        except ValueError:
            return u_out, raw_out, theta, k + 1
        if abs(state.theta) > ANGLE_LIMIT:
            return u_out, raw_out, theta, k + 1
    return u_out, raw_out, theta, n


def _narx_eval(w_in, b_in, w_out, linear, x):
    a = w_in @ x + b_in
    z = a if linear else np.tanh(a)
    return float(z @ w_out[:-1] + w_out[-1])


def narx_free_run(w_in, b_in, w_out, lag_m, lag_n, linear, u_n, y_init_n, limit_n):
    """Parallel-form simulation in normalized units; returns ``(y_n, n_done)``.

    ``y_init_n`` fills indices ``k0 - lag_n .. k0 - 1`` with ``k0 = max(lag_m, lag_n)``.
    """
    n = len(u_n)
    k0 = max(lag_m, lag_n)
    y = np.empty(n)
    y[:k0] = y_init_n[0]
    y[k0 - lag_n:k0] = y_init_n
    x = np.empty(lag_n + lag_m)
    for k in range(k0, n):
        for i in range(lag_n):
            x[i] = y[k - 1 - i]
        for j in range(lag_m):
            x[lag_n + j] = u_n[k - 1 - j]
        yk = _narx_eval(w_in, b_in, w_out, linear, x)
        y[k] = yk
        if not abs(yk) <= limit_n:
            return y, k + 1
    return y, n


def narx_closed_loop(w_in, b_in, w_out, lag_m, lag_n, linear, u_scale, y_scale,
                     gv, cv, theta_d, theta_d_dot, dt, theta0):
    """RISE driving a NARX model in parallel form; returns ``(u, u_raw, theta, n_done)``.

    Past outputs start at ``theta0`` and past inputs at zero (leg at rest).
    """
    gains = RiseGains(*gv)
    cs = _controller(cv)
    n = len(theta_d)
    u_out = np.zeros(n)
    raw_out = np.zeros(n)
    theta = np.zeros(n)
    y_hist = [theta0] * lag_n
    u_hist = [0.0] * lag_m
    limit = ANGLE_LIMIT
    x = np.empty(lag_n + lag_m)
    for k in range(n):
        th = y_hist[0]
        theta[k] = th
        u = rise_step(th, float(theta_d[k]), float(theta_d_dot[k]), gains, cs, dt)
        u_out[k] = u
        raw_out[k] = cs.u_raw
        u_hist = [u] + u_hist[:-1]
        for i in range(lag_n):
            x[i] = y_hist[i] / y_scale
        for j in range(lag_m):
            x[lag_n + j] = u_hist[j] / u_scale
        y_next = _narx_eval(w_in, b_in, w_out, linear, x) * y_scale
        if not abs(y_next) <= limit:
            return u_out, raw_out, theta, k + 1
        y_hist = [y_next] + y_hist[:-1]
    return u_out, raw_out, theta, n
