# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernels; C port of ``_pykernels`` with identical signatures."""

import numpy as np

from libc.math cimport sin, cos, exp, tanh, fabs, M_PI, isfinite

cdef double ANGLE_LIMIT = M_PI


cdef struct Plant:
    double J, m, l, g, psi1, psi2, psi3, k1, k2, k3
    int dissipative
    double c1, c2, c3, c4
    int fatigue
    double fatigue_tau
    int tremor
    double tremor_amp, tremor_freq


cdef struct Rise:
    double a1, a2, ks, beta
    double tau, rho_max
    double e1_prev, y_prev, e2_init, integrand_prev, integral_acc, u_raw
    int initialized


cdef Plant _plant(double[::1] pv, double[::1] dv):
    cdef Plant p
    p.J = pv[0]; p.m = pv[1]; p.l = pv[2]; p.g = pv[3]
    p.psi1 = pv[4]; p.psi2 = pv[5]; p.psi3 = pv[6]
    p.k1 = pv[7]; p.k2 = pv[8]; p.k3 = pv[9]
    p.dissipative = pv[10] != 0.0
    p.c1 = pv[11]; p.c2 = pv[12]; p.c3 = pv[13]; p.c4 = pv[14]
    p.fatigue = dv[0] != 0.0
    p.fatigue_tau = dv[1]
    p.tremor = dv[2] != 0.0
    p.tremor_amp = dv[3]
    p.tremor_freq = dv[4]
    return p


cdef Rise _rise(double[::1] gv, double[::1] cv):
    cdef Rise r
    r.a1 = gv[0]; r.a2 = gv[1]; r.ks = gv[2]; r.beta = gv[3]
    r.tau = cv[0]; r.rho_max = cv[2]
    r.e1_prev = 0.0; r.y_prev = 0.0; r.e2_init = 0.0
    r.integrand_prev = 0.0; r.integral_acc = 0.0; r.u_raw = 0.0
    r.initialized = 0
    return r


cdef inline double _accel(Plant* p, double th, double w, double t, double u) nogil:
    cdef double additive = 0.0, scale = 1.0, visc, total
    if p.fatigue:
        scale = exp(-t / p.fatigue_tau)
    if p.tremor:
        additive = p.tremor_amp * sin(2.0 * M_PI * p.tremor_freq * t)
    if p.dissipative:
        visc = -(p.k1 * tanh(p.k2 * w) + p.k3 * w)
    else:
        visc = -p.k1 * tanh(-p.k2 * w) + p.k3 * w
    total = (
        -p.m * p.g * p.l * sin(th)
        + (-(p.psi1 * th - p.psi1 * p.psi3) * exp(-p.psi2 * th))
        + visc
        + additive
        + scale * (p.c1 * (1.0 + p.c2 * sin(th)) * (1.0 - p.c3 * tanh(p.c4 * w))) * u
    )
    return total / p.J


cdef inline void _rk4(Plant* p, double* th, double* w, double* t, double u, double dt) nogil:
    cdef double h = 0.5 * dt
    cdef double x = th[0], v = w[0], tt = t[0]
    cdef double k1t, k1w, k2t, k2w, k3t, k3w, k4t, k4w
    k1t = v
    k1w = _accel(p, x, v, tt, u)
    k2t = v + h * k1w
    k2w = _accel(p, x + h * k1t, v + h * k1w, tt + h, u)
    k3t = v + h * k2w
    k3w = _accel(p, x + h * k2t, v + h * k2w, tt + h, u)
    k4t = v + dt * k3w
    k4w = _accel(p, x + dt * k3t, v + dt * k3w, tt + dt, u)
    th[0] = x + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    w[0] = v + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    t[0] = tt + dt


cdef inline double _sgn(double x) nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef inline double _rise_step(Rise* r, double theta, double theta_d, double dt) nogil:
    cdef double e1 = theta_d - theta
    cdef double y, e2, gain, integrand, candidate, proportional, raw
    cdef int first = not r.initialized
    if first:
        y = 0.0
    else:
        y = (r.y_prev * r.tau + (e1 - r.e1_prev)) / (r.tau + dt)
    r.y_prev = y
    r.e1_prev = e1
    r.initialized = 1
    e2 = y + r.a1 * e1
    gain = r.ks + 1.0
    integrand = gain * r.a2 * e2 + r.beta * _sgn(e2)
    if first:
        r.e2_init = e2
        r.integral_acc = 0.0
        candidate = 0.0
    else:
        candidate = r.integral_acc + 0.5 * dt * (integrand + r.integrand_prev)
    proportional = gain * e2 - gain * r.e2_init
    raw = proportional + candidate
    if not ((raw > r.rho_max and integrand > 0.0) or (raw < 0.0 and integrand < 0.0)):
        r.integral_acc = candidate
    r.integrand_prev = integrand
    r.u_raw = raw
    if raw < 0.0:
        return 0.0
    if raw > r.rho_max:
        return r.rho_max
    return raw


def plant_open_loop(double[::1] pv, double[::1] dv, double[::1] u, double dt, int substeps,
                    double theta0, double omega0):
    cdef Plant p = _plant(pv, dv)
    cdef Py_ssize_t n = u.shape[0], k
    cdef int s
    theta_a = np.zeros(n)
    omega_a = np.zeros(n)
    cdef double[::1] theta = theta_a
    cdef double[::1] omega = omega_a
    cdef double th = theta0, w = omega0, t = 0.0, h = dt / substeps
    cdef Py_ssize_t done = n
    with nogil:
        for k in range(n):
            theta[k] = th
            omega[k] = w
            for s in range(substeps):
                _rk4(&p, &th, &w, &t, u[k], h)
            if not (isfinite(th) and isfinite(w)) or fabs(th) > ANGLE_LIMIT:
                done = k + 1
                break
    return theta_a, omega_a, done


def plant_closed_loop(double[::1] pv, double[::1] dv, double[::1] gv, double[::1] cv,
                      double[::1] theta_d, double[::1] theta_d_dot, double dt, int substeps,
                      double theta0, double omega0):
    cdef Plant p = _plant(pv, dv)
    cdef Rise r = _rise(gv, cv)
    cdef Py_ssize_t n = theta_d.shape[0], k
    cdef int s
    u_a = np.zeros(n)
    raw_a = np.zeros(n)
    theta_a = np.zeros(n)
    cdef double[::1] u_out = u_a
    cdef double[::1] raw_out = raw_a
    cdef double[::1] theta = theta_a
    cdef double th = theta0, w = omega0, t = 0.0, h = dt / substeps, u
    cdef Py_ssize_t done = n
    with nogil:
        for k in range(n):
            theta[k] = th
            u = _rise_step(&r, th, theta_d[k], dt)
            u_out[k] = u
            raw_out[k] = r.u_raw
            for s in range(substeps):
                _rk4(&p, &th, &w, &t, u, h)
            if not (isfinite(th) and isfinite(w)) or fabs(th) > ANGLE_LIMIT:
                done = k + 1
                break
    return u_a, raw_a, theta_a, done


cdef inline double _narx_eval(double[:, ::1] w_in, double[::1] b_in, double[::1] w_out, int linear,
                              double* x, Py_ssize_t d) nogil:
    cdef Py_ssize_t hsz = w_in.shape[0], j, i
    cdef double a, acc = 0.0
    for j in range(hsz):
        a = 0.0
        for i in range(d):
            a += w_in[j, i] * x[i]
        a += b_in[j]
        if not linear:
            a = tanh(a)
        acc += a * w_out[j]
    return acc + w_out[hsz]


def narx_free_run(double[:, ::1] w_in, double[::1] b_in, double[::1] w_out, int lag_m, int lag_n, bint linear,
                  double[::1] u_n, double[::1] y_init_n, double limit_n):
    cdef Py_ssize_t n = u_n.shape[0], k, i
    cdef Py_ssize_t k0 = lag_m if lag_m > lag_n else lag_n
    cdef Py_ssize_t d = lag_m + lag_n
    y_a = np.empty(n)
    cdef double[::1] y = y_a
    cdef double yk
    cdef double[::1] x = np.empty(d)
    cdef Py_ssize_t done = n
    for k in range(min(k0, n)):
        y[k] = y_init_n[0]
    for i in range(lag_n):
        if k0 - lag_n + i < n:
            y[k0 - lag_n + i] = y_init_n[i]
    with nogil:
        for k in range(k0, n):
            for i in range(lag_n):
                x[i] = y[k - 1 - i]
            for i in range(lag_m):
                x[lag_n + i] = u_n[k - 1 - i]
            yk = _narx_eval(w_in, b_in, w_out, linear, &x[0], d)
            y[k] = yk
            if not fabs(yk) <= limit_n:
                done = k + 1
                break
    return y_a, done


def narx_closed_loop(double[:, ::1] w_in, double[::1] b_in, double[::1] w_out, int lag_m, int lag_n, bint linear,
                     double u_scale, double y_scale, double[::1] gv, double[::1] cv,
                     double[::1] theta_d, double[::1] theta_d_dot, double dt, double theta0):
    cdef Rise r = _rise(gv, cv)
    cdef Py_ssize_t n = theta_d.shape[0], k, i
    cdef Py_ssize_t d = lag_m + lag_n
    u_a = np.zeros(n)
    raw_a = np.zeros(n)
    theta_a = np.zeros(n)
    cdef double[::1] u_out = u_a
    cdef double[::1] raw_out = raw_a
    cdef double[::1] theta = theta_a
    cdef double[::1] y_hist = np.full(lag_n, theta0)
    cdef double[::1] u_hist = np.zeros(lag_m)
    cdef double[::1] x = np.empty(d)
    cdef double th, u, y_next
    cdef Py_ssize_t done = n
    with nogil:
        for k in range(n):
            th = y_hist[0]
            theta[k] = th
            u = _rise_step(&r, th, theta_d[k], dt)
            u_out[k] = u
            raw_out[k] = r.u_raw
            for i in range(lag_m - 1, 0, -1):
                u_hist[i] = u_hist[i - 1]
            u_hist[0] = u
            for i in range(lag_n):
                x[i] = y_hist[i] / y_scale
            for i in range(lag_m):
                x[lag_n + i] = u_hist[i] / u_scale
            y_next = _narx_eval(w_in, b_in, w_out, linear, &x[0], d) * y_scale
            if not fabs(y_next) <= ANGLE_LIMIT:
                done = k + 1
                break
            for i in range(lag_n - 1, 0, -1):
                y_hist[i] = y_hist[i - 1]
            y_hist[0] = y_next
    return u_a, raw_a, theta_a, done
