"""Session protocol emulation, log persistence and tracking metrics.

Logs are stored as ``<root>/<subject>/<session>/<kind>.csv`` with a JSON
sidecar ``<kind>.meta.json``. The CSV layout is fixed: header
``t_s,pw_us,angle_rad``, ``\\n`` line endings, floats written in shortest
round-trip form so a read-back is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .controller import ControllerState, RiseGains
from .errors import DivergenceError
from .ident import RegressionSet, build_pooled_regression_set
from .reference import TrajectorySpec, reference_series

IDENT_PERIOD = 0.02
CONTROL_PERIOD = 0.005
CSV_HEADER = "t_s,pw_us,angle_rad"

LogKind = Literal["identification", "control"]


class LogFormatError(ValueError):
    """Unreadable or inconsistent session log; message carries the line number."""


@dataclass
class SessionLog:
    subject: str
    session: int
    kind: LogKind
    ts: float
    t: np.ndarray
    pw: np.ndarray
    angle: np.ndarray
    trajectory: TrajectorySpec | None = None
    gains: RiseGains | None = None
    gains_source: str | None = None  # "iga" or "empirical" for control logs
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.pw = np.asarray(self.pw, dtype=float)
        self.angle = np.asarray(self.angle, dtype=float)
        if self.kind not in ("identification", "control"):
            raise ValueError(f"unknown log kind {self.kind!r}")
        if not (self.t.shape == self.pw.shape == self.angle.shape) or self.t.ndim != 1:
            raise ValueError("t, pw and angle must be 1-D and equal length")
        if not self.ts > 0:
            raise ValueError("sampling period must be positive")
        if self.t.size > 1:
            dt = np.diff(self.t)
            if np.any(np.abs(dt - self.ts) > 1e-9):
                raise ValueError(f"time stamps are not uniformly spaced at Ts={self.ts}")
        if np.any(self.pw < 0) or np.any(self.pw > 400):
            raise ValueError("pulse width outside [0, 400] us")

    def __len__(self):
        return self.t.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.ts


# -- excitation -----------------------------------------------------------


@dataclass(frozen=True)
class ExcitationSpec:
    pw_low: float = 80.0
    pw_high: float = 250.0
    hold_min: float = 4.0
    hold_max: float = 7.0
    duration: float = 60.0
    ts: float = IDENT_PERIOD
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.pw_low < self.pw_high <= 400.0:
            raise ValueError(f"need 0 <= pw_low < pw_high <= 400, got {self.pw_low}, {self.pw_high}")
        if not 0.0 < self.hold_min <= self.hold_max:
            raise ValueError("hold range must be positive and ordered")
        if not self.duration > 0 or not self.ts > 0:
            raise ValueError("duration and ts must be positive")


def generate_excitation(spec: ExcitationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Random piecewise-constant pulse-width staircase ``(t, pw)``.

    Hold times are drawn in whole samples so every complete segment lasts
    between ``hold_min`` and ``hold_max`` seconds exactly; the last segment is
    cut at ``duration``.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration / spec.ts))
    lo_n = int(math.ceil(spec.hold_min / spec.ts - 1e-9))
    hi_n = int(math.floor(spec.hold_max / spec.ts + 1e-9))
    pw = np.empty(n)
    k = 0
    while k < n:
        hold = int(rng.integers(lo_n, hi_n + 1))
        level = rng.uniform(spec.pw_low, spec.pw_high)
        pw[k:k + hold] = level
        k += hold
    return np.arange(n) * spec.ts, pw


def segment_lengths(pw: np.ndarray) -> list[int]:
    """Run lengths of a piecewise-constant series."""
    if len(pw) == 0:
        return []
    edges = np.flatnonzero(np.diff(pw) != 0) + 1
    bounds = np.concatenate([[0], edges, [len(pw)]])
    return np.diff(bounds).tolist()


def identification_session(system, spec: ExcitationSpec, subject: str = "synthetic", session: int = 1,
                           substeps: int = 4) -> SessionLog:
    """Drive the plant open loop with a fresh excitation and log it at ``spec.ts``."""
    t, pw = generate_excitation(spec)
    angle, diverged = system.open_loop(pw, spec.ts, substeps=substeps)
    if diverged:
        raise DivergenceError("plant diverged during excitation", index=len(angle))
    return SessionLog(subject, session, "identification", spec.ts, t, pw, angle,
                      meta={"excitation": _spec_dict(spec)})


# -- metrics --------------------------------------------------------------


def rmse(theta, theta_d) -> float:
    """Root-mean-square tracking error in degrees (inputs in radians)."""
    theta = np.asarray(theta, dtype=float)
    theta_d = np.asarray(theta_d, dtype=float)
    if theta.shape != theta_d.shape:
        raise ValueError("series lengths differ")
    if theta.size == 0:
        raise ValueError("empty series")
    return math.degrees(math.sqrt(float(np.mean((theta_d - theta) ** 2))))


def tec(theta, theta_d, ts: float, band: float = 5.0, dwell: float = 5.0,
        clock: Literal["start", "entry"] = "start") -> float | None:
    """Time of effective control in seconds, or ``None`` when never in band.

    Tracking is lost at the first run of out-of-band samples (``|e| > band``
    degrees) lasting at least ``dwell`` seconds that starts after the first
    in-band sample. TEC is the time to that run's first sample, or the whole
    series duration if tracking is never lost. ``clock="entry"`` measures from
    the first in-band sample instead of ``t=0``.
    """
    theta = np.asarray(theta, dtype=float)
    theta_d = np.asarray(theta_d, dtype=float)
    if theta.shape != theta_d.shape:
        raise ValueError("series lengths differ")
    if not ts > 0:
        raise ValueError("ts must be positive")
    out = np.abs(np.degrees(theta_d - theta)) > band
    inside = np.flatnonzero(~out)
    if inside.size == 0:
        return None
    first_in = int(inside[0])
    n = out.shape[0]
    need = int(math.ceil(dwell / ts - 1e-9))
    lost = None
    k = first_in + 1
    while k < n:
        if out[k]:
            j = k
            while j < n and out[j]:
                j += 1
            if j - k >= need:
                lost = k
                break
            k = j
        else:
            k += 1
    end = n if lost is None else lost
    origin = first_in if clock == "entry" else 0
    return (end - origin) * ts


def avstd_op(theta, ts: float, operating_point: float, band: float = 5.0) -> tuple[float, float] | None:
    """Mean and standard deviation (degrees) of the angle from first entry into the band around the operating point."""
    if not ts > 0:
        raise ValueError("ts must be positive")
    deg = np.degrees(np.asarray(theta, dtype=float))
    inside = np.flatnonzero(np.abs(deg - operating_point) <= band)
    if inside.size == 0:
        return None
    window = deg[int(inside[0]):]
    return float(np.mean(window)), float(np.std(window))


@dataclass(frozen=True)
class TrackingMetrics:
    rmse: float
    tec: float | None
    avstd_op: tuple[float, float] | None

    def as_dict(self):
        return {
            "rmse_deg": self.rmse,
            "tec_s": self.tec,
            "avstd_op_deg": list(self.avstd_op) if self.avstd_op is not None else None,
        }


def tracking_metrics(theta, theta_d, ts: float, operating_point: float | None = None) -> TrackingMetrics:
    av = avstd_op(theta, ts, operating_point) if operating_point is not None else None
    return TrackingMetrics(rmse(theta, theta_d), tec(theta, theta_d, ts), av)


def log_metrics(log: SessionLog) -> TrackingMetrics:
    """Metrics of a control log, with the reference rebuilt from its trajectory spec."""
    if log.trajectory is None:
        raise ValueError("log carries no trajectory; metrics need a reference")
    theta_d, _ = reference_series(log.trajectory, log.t)
    op = log.trajectory.operating_point if log.trajectory.kind == "smooth_step" else None
    return tracking_metrics(log.angle, theta_d, log.ts, op)


# -- multi-session data ---------------------------------------------------


def merge_sessions(logs: Sequence[SessionLog], control_only: bool = False) -> list[SessionLog]:
    """Order one subject's logs by session index, optionally keeping only IGA-tuned control runs."""
    if not logs:
        return []
    subjects = {log.subject for log in logs}
    if len(subjects) > 1:
        raise ValueError(f"logs from several subjects: {sorted(subjects)}")
    kept = [log for log in logs if not control_only or (log.kind == "control" and log.gains_source == "iga")]
    return sorted(kept, key=lambda log: log.session)


def pooled_regression_set(logs: Sequence[SessionLog], lag_m: int = 1, lag_n: int = 1) -> RegressionSet:
    """Regression rows built per log then stacked; all logs must share one sampling period."""
    if not logs:
        raise ValueError("no logs to pool")
    periods = {round(log.ts, 12) for log in logs}
    if len(periods) > 1:
        raise ValueError(f"cannot pool logs with different sampling periods {sorted(periods)}")
    return build_pooled_regression_set([(log.pw, log.angle) for log in logs], lag_m, lag_n,
                                       sample_period=logs[0].ts)


# -- closed loop ----------------------------------------------------------


def run_closed_loop(system, gains: RiseGains, spec: TrajectorySpec, controller: ControllerState | None = None,
                    subject: str = "synthetic", session: int = 1, gains_source: str | None = None) -> SessionLog:
    """Simulate one control-stimulation run; the controller starts from a clean state.

    Raises :class:`DivergenceError` (with the partial log attached) if the
    angle leaves ``[-pi, pi]``.
    """
    cs = (controller or ControllerState()).fresh()
    ro = system.closed_loop(gains, spec, cs)
    log = SessionLog(subject, session, "control", system.sample_period, ro.t, ro.u, ro.theta,
                     trajectory=spec, gains=gains, gains_source=gains_source,
                     meta={"controller": {"tau": cs.tau, "rho_min": cs.rho_min, "rho_max": cs.rho_max}})
    if ro.diverged:
        raise DivergenceError(f"closed loop diverged after {ro.n} samples", partial=log, index=ro.n)
    return log


# -- persistence ----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(log: SessionLog, path) -> None:
    lines = [CSV_HEADER]
    lines += [f"{_fmt(t)},{_fmt(p)},{_fmt(a)}" for t, p, a in zip(log.t, log.pw, log.angle)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != CSV_HEADER:
        raise LogFormatError(f"{path}:1: expected header {CSV_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise LogFormatError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise LogFormatError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise LogFormatError(f"{path}:{lineno}: non-finite value in {line!r}")
        rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()


def _spec_dict(spec) -> dict:
    return dict(spec.__dict__)


def log_meta(log: SessionLog) -> dict:
    return {
        "subject": log.subject,
        "session": log.session,
        "kind": log.kind,
        "ts": log.ts,
        "rows": len(log),
        "trajectory": _spec_dict(log.trajectory) if log.trajectory else None,
        "gains": log.gains.as_dict() if log.gains else None,
        "gains_source": log.gains_source,
        "extra": log.meta,
    }


def log_paths(root, subject: str, session: int, kind: str) -> tuple[Path, Path]:
    d = Path(root) / subject / str(session)
    return d / f"{kind}.csv", d / f"{kind}.meta.json"


def save_log(log: SessionLog, root) -> Path:
    csv_path, meta_path = log_paths(root, log.subject, log.session, log.kind)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(log, csv_path)
    meta_path.write_text(json.dumps(log_meta(log), indent=2, sort_keys=True) + "\n")
    return csv_path


def load_log(csv_path) -> SessionLog:
    csv_path = Path(csv_path)
    meta_path = csv_path.with_name(csv_path.stem + ".meta.json")
    if not meta_path.exists():
        raise LogFormatError(f"{csv_path}: missing sidecar {meta_path.name}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    t, pw, angle = read_csv(csv_path)
    try:
        traj = TrajectorySpec(**meta["trajectory"]) if meta.get("trajectory") else None
        gains = RiseGains(**meta["gains"]) if meta.get("gains") else None
        return SessionLog(meta["subject"], int(meta["session"]), meta["kind"], float(meta["ts"]), t, pw, angle,
                          trajectory=traj, gains=gains, gains_source=meta.get("gains_source"),
                          meta=meta.get("extra") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(f"{csv_path}: bad log or sidecar ({exc})") from None


def load_sessions(root, subject: str | None = None) -> list[SessionLog]:
    """All logs under ``root`` (optionally one subject), sorted by (subject, session, kind)."""
    root = Path(root)
    pattern = f"{subject}/*/*.csv" if subject else "*/*/*.csv"
    logs = [load_log(p) for p in sorted(root.glob(pattern))]
    return sorted(logs, key=lambda log: (log.subject, log.session, log.kind))


def relabel(log: SessionLog, **changes) -> SessionLog:
    return replace(log, **changes)
