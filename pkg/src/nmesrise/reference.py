"""Reference knee trajectories: isotonic sine and isometric (smooth) step."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

TrajectoryKind = Literal["sine", "smooth_step"]


@dataclass(frozen=True)
class TrajectorySpec:
    """Angles in degrees (I/O convention); :func:`reference` returns radians."""

    kind: TrajectoryKind = "sine"
    theta_low: float = 10.0
    theta_high: float = 40.0
    period: float = 5.0
    ramp_time: float = 2.0
    duration: float = 60.0

    def __post_init__(self):
        if self.kind not in ("sine", "smooth_step"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not 0.0 <= self.theta_low < self.theta_high <= 40.0:
            raise ValueError(
                f"need 0 <= theta_low < theta_high <= 40 deg, got {self.theta_low}, {self.theta_high}"
            )
        if not self.period > 0 or not self.ramp_time > 0 or not self.duration > 0:
            raise ValueError("period, ramp_time and duration must be positive")

    @property
    def operating_point(self) -> float:
        """Regulation target in degrees (the step height; sine midpoint otherwise)."""
        if self.kind == "smooth_step":
            return self.theta_high
        return 0.5 * (self.theta_low + self.theta_high)


def sine_wave(theta_low: float = 10.0, theta_high: float = 40.0, period: float = 5.0, duration: float = 60.0):
    return TrajectorySpec("sine", theta_low, theta_high, period=period, duration=duration)


def step_wave(theta_high: float = 40.0, ramp_time: float = 2.0, duration: float = 60.0):
    # the step starts from rest; theta_low is unused
    return TrajectorySpec("smooth_step", 0.0, theta_high, ramp_time=ramp_time, duration=duration)


def _quintic(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _quintic_rate(s):
    return 30.0 * s * s * (1.0 - s) * (1.0 - s)


def reference(t: float, spec: TrajectorySpec) -> tuple[float, float]:
    """Desired angle and angular velocity (rad, rad/s) at time ``t``."""
    if not 0.0 <= t <= spec.duration:
        raise ValueError(f"t={t} outside [0, {spec.duration}]")
    lo = math.radians(spec.theta_low)
    hi = math.radians(spec.theta_high)
    if spec.kind == "sine":
        mid = 0.5 * (lo + hi)
        amp = 0.5 * (hi - lo)
        w = 2.0 * math.pi / spec.period
        return mid - amp * math.cos(w * t), amp * w * math.sin(w * t)
    if t >= spec.ramp_time:
        return hi, 0.0
    s = t / spec.ramp_time
    return hi * _quintic(s), hi * _quintic_rate(s) / spec.ramp_time


def reference_series(spec: TrajectorySpec, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`reference` over a time grid."""
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < 0.0 or t.max() > spec.duration + 1e-9):
        raise ValueError(f"time grid leaves [0, {spec.duration}]")
    lo = math.radians(spec.theta_low)
    hi = math.radians(spec.theta_high)
    if spec.kind == "sine":
        mid = 0.5 * (lo + hi)
        amp = 0.5 * (hi - lo)
        w = 2.0 * math.pi / spec.period
        return mid - amp * np.cos(w * t), amp * w * np.sin(w * t)
    s = np.clip(t / spec.ramp_time, 0.0, 1.0)
    theta = hi * _quintic(s)
    rate = np.where(t < spec.ramp_time, hi * _quintic_rate(s) / spec.ramp_time, 0.0)
    return theta, rate


def time_grid(duration: float, ts: float) -> np.ndarray:
    n = int(round(duration / ts))
    return np.arange(n, dtype=float) * ts
