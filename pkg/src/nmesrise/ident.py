"""NARX identification of the pulse-width -> knee-angle map.

A single-hidden-layer perceptron approximates::

    y(k) = F[y(k-1), ..., y(k-n), u(k-1), ..., u(k-m)]

It is trained in series-parallel form (measured past outputs as regressors)
and simulated in parallel form (its own past predictions fed back).

Inputs are normalized by fixed constants so a model is portable between
sessions: pulse width / 400 us, angle / (pi / 2) rad.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import kernels
from .errors import DivergenceError

PW_SCALE = 400.0
ANGLE_SCALE = math.pi / 2.0
ANGLE_LIMIT = math.pi
MODEL_FORMAT = "nmesrise.narx"
MODEL_VERSION = 1

Activation = Literal["tanh", "linear"]


def normalize_input(u):
    return np.asarray(u, dtype=float) / PW_SCALE


def denormalize_input(u_n):
    return np.asarray(u_n, dtype=float) * PW_SCALE


def normalize_output(y):
    return np.asarray(y, dtype=float) / ANGLE_SCALE


def denormalize_output(y_n):
    return np.asarray(y_n, dtype=float) * ANGLE_SCALE


@dataclass
class NarxModel:
    lag_m: int
    lag_n: int
    weights_in: np.ndarray  # (hidden_size, lag_n + lag_m)
    bias_in: np.ndarray  # (hidden_size,)
    weights_out: np.ndarray  # (hidden_size + 1,), last entry is the output bias
    activation: Activation = "tanh"
    input_norm: float = PW_SCALE
    output_norm: float = ANGLE_SCALE
    sample_period: float = 0.02

    def __post_init__(self):
        if self.lag_m < 1 or self.lag_n < 1:
            raise ValueError("lag orders must be >= 1")
        self.weights_in = np.ascontiguousarray(self.weights_in, dtype=float)
        self.bias_in = np.ascontiguousarray(self.bias_in, dtype=float)
        self.weights_out = np.ascontiguousarray(self.weights_out, dtype=float)
        h = self.weights_in.shape[0]
        if h < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.weights_in.shape != (h, self.n_features):
            raise ValueError(f"weights_in has shape {self.weights_in.shape}, expected {(h, self.n_features)}")
        if self.bias_in.shape != (h,) or self.weights_out.shape != (h + 1,):
            raise ValueError("bias_in / weights_out do not match hidden_size")
        if self.activation not in ("tanh", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        for arr in (self.weights_in, self.bias_in, self.weights_out):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model weights must be finite")

    @property
    def hidden_size(self) -> int:
        return self.weights_in.shape[0]

    @property
    def n_features(self) -> int:
        return self.lag_m + self.lag_n

    @property
    def max_lag(self) -> int:
        return max(self.lag_m, self.lag_n)

    def copy(self) -> NarxModel:
        return NarxModel(self.lag_m, self.lag_n, self.weights_in.copy(), self.bias_in.copy(),
                         self.weights_out.copy(), self.activation, self.input_norm, self.output_norm,
                         self.sample_period)


def init_model(lag_m: int = 1, lag_n: int = 1, hidden_size: int = 250, seed: int = 0,
               activation: Activation = "tanh", sample_period: float = 0.02) -> NarxModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    d = lag_m + lag_n
    lim_in = math.sqrt(6.0 / (d + hidden_size))
    lim_out = math.sqrt(6.0 / (hidden_size + 1))
    w_in = rng.uniform(-lim_in, lim_in, size=(hidden_size, d))
    w_out = np.zeros(hidden_size + 1)
    w_out[:-1] = rng.uniform(-lim_out, lim_out, size=hidden_size)
    return NarxModel(lag_m, lag_n, w_in, np.zeros(hidden_size), w_out, activation=activation,
                     sample_period=sample_period)


@dataclass
class RegressionSet:
    """Series-parallel regressors ``[y(k-1..k-n), u(k-1..k-m)]`` -> ``y(k)``, all normalized."""

    features: np.ndarray
    targets: np.ndarray
    lag_m: int
    lag_n: int
    sample_period: float | None = None

    @property
    def rows(self) -> int:
        return self.targets.shape[0]


def build_regression_set(u, y, lag_m: int = 1, lag_n: int = 1, sample_period: float | None = None) -> RegressionSet:
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError(f"input and output series must be 1-D and equal length, got {u.shape} and {y.shape}")
    if lag_m < 1 or lag_n < 1:
        raise ValueError("lag orders must be >= 1")
    k0 = max(lag_m, lag_n)
    n = u.shape[0]
    if n < k0 + 1:
        raise ValueError(f"series of length {n} too short for lags (m={lag_m}, n={lag_n})")
    un = normalize_input(u)
    yn = normalize_output(y)
    cols = [yn[k0 - i:n - i] for i in range(1, lag_n + 1)]
    cols += [un[k0 - j:n - j] for j in range(1, lag_m + 1)]
    return RegressionSet(np.column_stack(cols), yn[k0:].copy(), lag_m, lag_n, sample_period)


def build_pooled_regression_set(series: Sequence[tuple], lag_m: int = 1, lag_n: int = 1,
                                sample_period: float | None = None) -> RegressionSet:
    """Concatenate per-series regression rows; no row spans two series."""
    if not series:
        raise ValueError("no series to pool")
    parts = [build_regression_set(u, y, lag_m, lag_n) for u, y in series]
    return RegressionSet(np.vstack([p.features for p in parts]), np.concatenate([p.targets for p in parts]),
                         lag_m, lag_n, sample_period)


def _hidden(model: NarxModel, x: np.ndarray) -> np.ndarray:
    a = x @ model.weights_in.T + model.bias_in
    return a if model.activation == "linear" else np.tanh(a)


def predict_normalized(model: NarxModel, features: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    return _hidden(model, x) @ model.weights_out[:-1] + model.weights_out[-1]


def forward(model: NarxModel, features) -> float | np.ndarray:
    """Network output in radians for one normalized regressor vector (or a matrix of rows)."""
    arr = np.asarray(features, dtype=float)
    out = predict_normalized(model, arr) * model.output_norm
    return float(out[0]) if arr.ndim == 1 else out


def loss_and_gradients(model: NarxModel, x: np.ndarray, y: np.ndarray):
    """Mean squared error on normalized targets and its gradient for every weight array.

    Returns ``(loss, {"weights_in", "bias_in", "weights_out"})``.
    """
    n = x.shape[0]
    a = x @ model.weights_in.T + model.bias_in
    z = a if model.activation == "linear" else np.tanh(a)
    pred = z @ model.weights_out[:-1] + model.weights_out[-1]
    resid = pred - y
    loss = float(np.mean(resid**2))
    d_pred = (2.0 / n) * resid
    g_out = np.empty_like(model.weights_out)
    g_out[:-1] = z.T @ d_pred
    g_out[-1] = d_pred.sum()
    d_z = np.outer(d_pred, model.weights_out[:-1])
    d_a = d_z if model.activation == "linear" else d_z * (1.0 - z * z)
    return loss, {"weights_in": d_a.T @ x, "bias_in": d_a.sum(axis=0), "weights_out": g_out}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 500
    batch_size: int | None = 64  # None = full batch
    validation_fraction: float = 0.2
    patience: int = 25
    seed: int = 0
    hidden_size: int = 250
    activation: Activation = "tanh"
    optimizer: Literal["adam", "gd"] = "adam"

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.max_epochs < 1 or self.patience < 1 or self.hidden_size < 1:
            raise ValueError("max_epochs, patience and hidden_size must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class FitMetrics:
    """Pearson correlation, coefficient of determination and MSE; ``None`` when not computable."""

    corr: float | None
    r2: float | None
    mse: float

    def as_dict(self):
        return {"corr": self.corr, "r2": self.r2, "mse": self.mse}


@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    rows_train: int = 0
    rows_val: int = 0
    train_metrics: FitMetrics | None = None
    val_metrics: FitMetrics | None = None

    def as_dict(self):
        return {
            "train_mse": self.train_mse,
            "val_mse": self.val_mse,
            "best_epoch": self.best_epoch,
            "rows_train": self.rows_train,
            "rows_val": self.rows_val,
            "train_metrics": self.train_metrics.as_dict() if self.train_metrics else None,
            "val_metrics": self.val_metrics.as_dict() if self.val_metrics else None,
        }


def split_chronological(data: RegressionSet, validation_fraction: float):
    n_val = max(1, int(round(data.rows * validation_fraction)))
    n_train = data.rows - n_val
    if n_train < 1:
        raise ValueError("not enough rows for a train/validation split")
    return (data.features[:n_train], data.targets[:n_train]), (data.features[n_train:], data.targets[n_train:])


_PARAMS = ("weights_in", "bias_in", "weights_out")


def train(data: RegressionSet, cfg: TrainConfig = TrainConfig()) -> tuple[NarxModel, TrainReport]:
    """Fit the network by mini-batch gradient descent (Adam by default).

    The tail ``validation_fraction`` of rows (chronological) is held out; the
    weights of the best validation epoch are returned.
    """
    if cfg.batch_size is not None and data.rows <= cfg.batch_size:
        raise ValueError(f"need more rows ({data.rows}) than batch_size ({cfg.batch_size})")
    (x_tr, y_tr), (x_va, y_va) = split_chronological(data, cfg.validation_fraction)
    if np.var(y_tr) == 0.0:
        warnings.warn("training targets are constant; fitting a degenerate model", RuntimeWarning, stacklevel=2)

    model = init_model(data.lag_m, data.lag_n, cfg.hidden_size, seed=cfg.seed, activation=cfg.activation,
                       sample_period=data.sample_period or 0.02)
    rng = np.random.default_rng([cfg.seed, 1])
    m1 = {k: np.zeros_like(getattr(model, k)) for k in _PARAMS}
    m2 = {k: np.zeros_like(getattr(model, k)) for k in _PARAMS}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step_count = 0

    n_tr = x_tr.shape[0]
    batch = n_tr if cfg.batch_size is None else cfg.batch_size
    report = TrainReport(rows_train=n_tr, rows_val=x_va.shape[0])
    best = model.copy()
    best_val = math.inf
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = np.arange(n_tr) if cfg.batch_size is None else rng.permutation(n_tr)
        for start in range(0, n_tr, batch):
            idx = order[start:start + batch]
            _, grads = loss_and_gradients(model, x_tr[idx], y_tr[idx])
            step_count += 1
            for k in _PARAMS:
                w = getattr(model, k)
                if cfg.optimizer == "gd":
                    w -= cfg.learning_rate * grads[k]
                    continue
                m1[k] = b1 * m1[k] + (1 - b1) * grads[k]
                m2[k] = b2 * m2[k] + (1 - b2) * grads[k] ** 2
                m_hat = m1[k] / (1 - b1**step_count)
                v_hat = m2[k] / (1 - b2**step_count)
                w -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        train_mse = float(np.mean((predict_normalized(model, x_tr) - y_tr) ** 2))
        val_mse = float(np.mean((predict_normalized(model, x_va) - y_va) ** 2))
        report.train_mse.append(train_mse)
        report.val_mse.append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            best = model.copy()
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    report.train_metrics = fit_metrics(denormalize_output(y_tr), forward(best, x_tr))
    report.val_metrics = fit_metrics(denormalize_output(y_va), forward(best, x_va))
    return best, report


def one_step_predict(model: NarxModel, u, y) -> np.ndarray:
    """Series-parallel prediction aligned with ``y[max_lag:]``."""
    rs = build_regression_set(u, y, model.lag_m, model.lag_n)
    return forward(model, rs.features)


def free_run(model: NarxModel, u, y_init) -> np.ndarray:
    """Parallel-form simulation driven by ``u`` (us), seeded with ``lag_n`` measured angles.

    Returns an angle series the length of ``u``; entries before
    ``max(lag_m, lag_n)`` are the seed values. Raises :class:`DivergenceError`
    when a prediction exceeds pi in magnitude.
    """
    u = np.asarray(u, dtype=float)
    y_init = np.atleast_1d(np.asarray(y_init, dtype=float))
    if y_init.shape[0] != model.lag_n:
        raise ValueError(f"y_init must hold lag_n={model.lag_n} values")
    if u.shape[0] < model.lag_m:
        raise ValueError("input series shorter than lag_m")
    y_n, done = kernels.narx_free_run(model, u / model.input_norm, y_init / model.output_norm,
                                      ANGLE_LIMIT / model.output_norm)
    y = y_n * model.output_norm
    if done < u.shape[0]:
        raise DivergenceError(f"free-run prediction diverged at sample {done - 1}", partial=y[:done], index=done - 1)
    return y


def fit_metrics(y, y_hat) -> FitMetrics:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.size == 0:
        raise ValueError("series must have equal, nonzero length")
    resid = y - y_hat
    mse = float(np.mean(resid**2))
    dy = y - y.mean()
    ss_tot = float(np.sum(dy**2))
    if ss_tot == 0.0:
        return FitMetrics(None, None, mse)
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    dh = y_hat - y_hat.mean()
    denom = math.sqrt(ss_tot * float(np.sum(dh**2)))
    corr = float(np.sum(dy * dh)) / denom if denom > 0.0 else None
    if corr is not None:
        corr = max(-1.0, min(1.0, corr))
    return FitMetrics(corr, r2, mse)


def model_to_dict(model: NarxModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "lag_m": model.lag_m,
        "lag_n": model.lag_n,
        "hidden_size": model.hidden_size,
        "activation": model.activation,
        "input_norm": model.input_norm,
        "output_norm": model.output_norm,
        "sample_period": model.sample_period,
        "weights_in": model.weights_in.tolist(),
        "bias_in": model.bias_in.tolist(),
        "weights_out": model.weights_out.tolist(),
    }


def model_from_dict(doc: dict) -> NarxModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a NARX model document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    model = NarxModel(
        lag_m=int(doc["lag_m"]), lag_n=int(doc["lag_n"]),
        weights_in=np.array(doc["weights_in"], dtype=float).reshape(int(doc["hidden_size"]), -1),
        bias_in=np.array(doc["bias_in"], dtype=float),
        weights_out=np.array(doc["weights_out"], dtype=float),
        activation=doc["activation"],
        input_norm=float(doc["input_norm"]), output_norm=float(doc["output_norm"]),
        sample_period=float(doc["sample_period"]),
    )
    return model


def save_model(model: NarxModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> NarxModel:
    return model_from_dict(json.loads(Path(path).read_text()))
