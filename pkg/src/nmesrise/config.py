"""Run configuration: one JSON document, every field defaulted.

Sections mirror the module types::

    {
      "subject": "synthetic",
      "seed": 0,
      "profile": "healthy",            # or "sci"
      "plant": {..., "stim_map": {...}},
      "disturbance": {"kind": "none", ...},
      "trajectory": {"period": 5.0, "ramp_time": 2.0, ...},
      "excitation": {"pw_low": 80.0, ...},
      "train": {"hidden_size": 250, ...},
      "iga": {"population_size": 8, ..., "bounds": {"alpha1": [0.5, 8.0], ...}},
      "controller": {"tau": 0.01, "rho_min": 0.0, "rho_max": 300.0},
      "paths": {"sessions": "sessions", "out": "out"}
    }

Any key can be overridden from the environment: ``NMESRISE_<SECTION>__<KEY>``
(double underscore between nesting levels, case-insensitive), e.g.
``NMESRISE_IGA__POPULATION_SIZE=10`` or ``NMESRISE_PLANT__STIM_MAP__C1=0.03``.
Values are parsed as JSON when possible, otherwise taken as strings.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .controller import ControllerState, GainConditionBounds
from .iga import PRESETS, GainBounds, IgaConfig
from .ident import TrainConfig
from .plant import DisturbanceModel, PlantParams, StimMapParams
from .reference import TrajectorySpec
from .session import ExcitationSpec

ENV_PREFIX = "NMESRISE_"
PROFILES = ("healthy", "sci")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryDefaults:
    period: float = 5.0
    ramp_time: float = 2.0
    duration: float | None = None  # None: 60 s healthy, 40 s SCI
    sine_low: float = 10.0
    sine_high: float = 40.0
    step_high: float | None = None  # None: 40 deg healthy, 30 deg SCI


@dataclass(frozen=True)
class Paths:
    sessions: str = "sessions"
    out: str = "out"


@dataclass(frozen=True)
class RunConfig:
    subject: str = "synthetic"
    seed: int = 0
    profile: str = "healthy"
    plant: PlantParams = field(default_factory=PlantParams)
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    trajectory: TrajectoryDefaults = field(default_factory=TrajectoryDefaults)
    excitation: ExcitationSpec = field(default_factory=ExcitationSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    iga: IgaConfig = field(default_factory=IgaConfig)
    controller: ControllerState = field(default_factory=ControllerState)
    paths: Paths = field(default_factory=Paths)

    def trajectory_spec(self, kind: str) -> TrajectorySpec:
        td = self.trajectory
        sci = self.profile == "sci"
        duration = td.duration if td.duration is not None else (40.0 if sci else 60.0)
        if kind == "sine":
            return TrajectorySpec("sine", td.sine_low, td.sine_high, period=td.period, duration=duration)
        if kind in ("step", "smooth_step"):
            high = td.step_high if td.step_high is not None else (30.0 if sci else 40.0)
            return TrajectorySpec("smooth_step", 0.0, high, ramp_time=td.ramp_time, duration=duration)
        raise ConfigError(f"unknown trajectory {kind!r}")

    def excitation_spec(self) -> ExcitationSpec:
        if self.profile == "sci" and self.excitation.duration == ExcitationSpec().duration:
            return replace(self.excitation, duration=40.0)
        return self.excitation

    def controller_state(self) -> ControllerState:
        return self.controller.fresh()


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = dict(data)
    if cls is PlantParams and "stim_map" in kwargs:
        kwargs["stim_map"] = _build(StimMapParams, kwargs["stim_map"], f"{where}.stim_map")
    if cls is IgaConfig:
        if "bounds" in kwargs:
            b = kwargs["bounds"]
            if not isinstance(b, dict):
                raise ConfigError(f"{where}.bounds: expected an object")
            kwargs["bounds"] = _build(GainBounds, {k: tuple(v) for k, v in b.items()}, f"{where}.bounds")
        if "condition_bounds" in kwargs:
            kwargs["condition_bounds"] = _build(GainConditionBounds, kwargs["condition_bounds"],
                                                f"{where}.condition_bounds")
    if cls is ControllerState:
        extra = sorted(set(kwargs) - {"tau", "rho_min", "rho_max"})
        if extra:
            raise ConfigError(f"{where}: only tau, rho_min, rho_max are configurable, got {extra}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {
    "plant": PlantParams,
    "disturbance": DisturbanceModel,
    "trajectory": TrajectoryDefaults,
    "excitation": ExcitationSpec,
    "train": TrainConfig,
    "iga": IgaConfig,
    "controller": ControllerState,
    "paths": Paths,
}


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env(doc: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    doc = copy.deepcopy(doc)
    for key in sorted(environ):
        if not key.upper().startswith(ENV_PREFIX) or key.upper() == "NMESRISE_PURE_PYTHON":
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {key}: {part} is not a section")
        node[path[-1]] = _parse_env_value(environ[key])
    return doc


def from_dict(doc: dict, seed: int | None = None, profile: str | None = None, preset: str | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"subject", "seed", "profile"})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    sections = {name: _build(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()}
    seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    profile = profile or doc.get("profile", "healthy")
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES}, got {profile!r}")
    iga_cfg = sections["iga"]
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
            iga_cfg = replace(iga_cfg, **PRESETS[preset])
        sections["iga"] = replace(iga_cfg, seed=seed)
        sections["excitation"] = replace(sections["excitation"], seed=seed)
        sections["train"] = replace(sections["train"], seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    subject = str(doc.get("subject", "synthetic"))
    if not subject or "/" in subject:
        raise ConfigError(f"invalid subject id {subject!r}")
    cfg = RunConfig(subject=subject, seed=seed, profile=profile, **sections)
    for kind in ("sine", "step"):
        try:
            cfg.trajectory_spec(kind)
        except ValueError as exc:
            raise ConfigError(f"trajectory: {exc}") from None
    return cfg


def load_config(path=None, seed=None, profile=None, preset=None, environ=None) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    doc = apply_env(doc, environ)
    return from_dict(doc, seed=seed, profile=profile, preset=preset)
