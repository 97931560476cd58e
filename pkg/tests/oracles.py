"""Naive per-definition re-implementations used as test oracles."""

import math


def tec_naive(theta, theta_d, ts, band=5.0, dwell=5.0):
    err = [abs(math.degrees(d - a)) for a, d in zip(theta, theta_d)]
    n = len(err)
    first_in = next((k for k in range(n) if err[k] <= band), None)
    if first_in is None:
        return None
    need = int(math.ceil(dwell / ts - 1e-9))
    for s in range(first_in + 1, n - need + 1):
        if all(err[j] > band for j in range(s, s + need)):
            return s * ts
    return n * ts


def avstd_naive(theta, op, band=5.0):
    deg = [math.degrees(a) for a in theta]
    start = next((k for k in range(len(deg)) if abs(deg[k] - op) <= band), None)
    if start is None:
        return None
    w = deg[start:]
    mean = sum(w) / len(w)
    return mean, math.sqrt(sum((x - mean) ** 2 for x in w) / len(w))


def rmse_naive(theta, theta_d):
    return math.degrees(math.sqrt(sum((d - a) ** 2 for a, d in zip(theta, theta_d)) / len(theta)))


def pearson_naive(y, h):
    n = len(y)
    my, mh = sum(y) / n, sum(h) / n
    cov = sum((a - my) * (b - mh) for a, b in zip(y, h))
    vy = sum((a - my) ** 2 for a in y)
    vh = sum((b - mh) ** 2 for b in h)
    return cov / math.sqrt(vy * vh)


def r2_naive(y, h):
    my = sum(y) / len(y)
    return 1 - sum((a - b) ** 2 for a, b in zip(y, h)) / sum((a - my) ** 2 for a in y)


def mse_naive(y, h):
    return sum((a - b) ** 2 for a, b in zip(y, h)) / len(y)


def random_error_trace(rng, n=1200, band=5.0):
    """Angle/reference pair whose error alternates between in-band and out-of-band runs (radians)."""
    err = []
    inside = bool(rng.integers(0, 2))
    while len(err) < n:
        run = int(rng.integers(1, 250))
        mag = rng.uniform(0, band) if inside else rng.uniform(band + 1e-3, 4 * band)
        sign = rng.choice([-1.0, 1.0], size=run)
        err += list(sign * mag)
        inside = not inside
    if rng.random() < 0.1:
        err = [band * 2.0] * n  # never in band
    theta_d = [math.radians(20.0 + 10 * math.sin(0.01 * k)) for k in range(n)]
    theta = [d - math.radians(e) for d, e in zip(theta_d, err[:n])]
    return theta, theta_d
