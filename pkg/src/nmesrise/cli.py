"""Command-line front end: ``nmesrise {sim,identify,tune,evaluate,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 infeasible
tuning result or diverged rollout.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .controller import RiseGains, check_gain_condition
from .errors import DivergenceError
from .iga import AuditLog, tune
from .ident import fit_metrics, free_run, load_model, save_model, train
from .reference import reference_series
from .session import (
    CONTROL_PERIOD,
    LogFormatError,
    SessionLog,
    generate_excitation,
    identification_session,
    load_log,
    load_sessions,
    log_meta,
    log_metrics,
    merge_sessions,
    pooled_regression_set,
    run_closed_loop,
    save_log,
    write_csv,
)
from .simulate import NarxSystem, PlantSystem

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4
GAINS_FORMAT = "nmesrise.gains"
GAINS_VERSION = 1
STIM_AMPLITUDE_MA = {"healthy": 80, "sci": 120}


class DataError(Exception):
    pass


class Infeasible(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.paths.out)


def _sessions_dir(args, cfg: RunConfig) -> Path:
    return Path(args.sessions or cfg.paths.sessions)



# -- sim ------------------------------------------------------------------


def cmd_sim(args, cfg: RunConfig) -> int:
    exc = cfg.excitation_spec()
    if args.duration is not None:
        if not args.duration > 0:
            raise ConfigError("--duration must be positive")
        exc = replace(exc, duration=args.duration)
    if args.pw is not None and not 0.0 <= args.pw <= 400.0:
        raise ConfigError("--pw must lie in [0, 400] us")
    t, pw = generate_excitation(exc)
    if args.pw is not None:
        pw = np.full_like(t, args.pw)
    system = PlantSystem(cfg.plant, cfg.disturbance)
    angle, diverged = system.open_loop(pw, exc.ts, substeps=args.substeps)
    n = angle.shape[0]
    log = SessionLog(cfg.subject, 0, "identification", exc.ts, t[:n], pw[:n], angle,
                     meta={"excitation": asdict(exc), "constant_pw": args.pw, "diverged": diverged})
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(log, out / "sim.csv")
    _write(out / "sim.meta.json", _dump(log_meta(log)))
    print(f"sim: {n} samples at Ts={exc.ts} s, max angle {math.degrees(float(np.max(angle, initial=0.0))):.2f} deg"
          f" -> {out / 'sim.csv'}")
    if diverged:
        print("sim: plant diverged (|theta| > pi)", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# -- identify -------------------------------------------------------------


def _synthetic_sessions(cfg: RunConfig, root: Path, count: int) -> list[SessionLog]:
    system = PlantSystem(cfg.plant, cfg.disturbance)
    logs = []
    for i in range(count):
        spec = replace(cfg.excitation_spec(), seed=cfg.seed + i)
        try:
            log = identification_session(system, spec, cfg.subject, session=i + 1)
        except DivergenceError as exc:
            raise Infeasible(f"synthetic excitation diverged: {exc}") from None
        log.meta["stim_amplitude_ma"] = STIM_AMPLITUDE_MA[cfg.profile]
        save_log(log, root)
        logs.append(log)
    return logs


def cmd_identify(args, cfg: RunConfig) -> int:
    if args.n_sessions < 1:
        raise ConfigError("--n-sessions must be >= 1")
    root = _sessions_dir(args, cfg)
    if args.synthetic:
        logs = _synthetic_sessions(cfg, root, args.n_sessions)
    else:
        if not root.is_dir():
            raise DataError(f"sessions directory {root} does not exist")
        try:
            logs = load_sessions(root, cfg.subject)
        except LogFormatError as exc:
            raise DataError(str(exc)) from None
    if args.control_only:
        used = merge_sessions(logs, control_only=True)
    else:
        used = merge_sessions([log for log in logs if log.kind == "identification"])
    if not used:
        what = "IGA control" if args.control_only else "identification"
        raise DataError(f"no usable {what} sessions for subject {cfg.subject!r} under {root}")
    try:
        data = pooled_regression_set(used, lag_m=args.lag, lag_n=args.lag)
        model, rep = train(data, cfg.train)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    free = []
    for log in used:
        try:
            y_hat = free_run(model, log.pw, log.angle[:model.lag_n])
            free.append({"session": log.session, "kind": log.kind, **fit_metrics(log.angle, y_hat).as_dict(),
                         "rmse_deg": math.degrees(math.sqrt(float(np.mean((log.angle - y_hat) ** 2))))})
        except DivergenceError:
            free.append({"session": log.session, "kind": log.kind, "diverged": True})

    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    report = {
        "subject": cfg.subject,
        "seed": cfg.seed,
        "control_only": bool(args.control_only),
        "sessions": [{"session": log.session, "kind": log.kind, "rows": len(log)} for log in used],
        "pooled_rows": data.rows,
        "lag_m": model.lag_m,
        "lag_n": model.lag_n,
        "hidden_size": model.hidden_size,
        "sample_period": model.sample_period,
        "epochs_run": len(rep.train_mse),
        "best_epoch": rep.best_epoch,
        "rows_train": rep.rows_train,
        "rows_val": rep.rows_val,
        "train": rep.train_metrics.as_dict(),
        "validation": rep.val_metrics.as_dict(),
        "free_run": free,
    }
    _write(out / "identify_report.json", _dump(report))
    v = rep.val_metrics
    print(f"identify: {len(used)} session(s), {data.rows} pooled rows; held-out Corr={v.corr} R2={v.r2} "
          f"MSE={v.mse:.3g} -> {out / 'model.json'}")
    return EXIT_OK


# -- tune -----------------------------------------------------------------


def _individual_dict(ind) -> dict:
    return {**ind.gains.as_dict(), "cost": ind.fitness, "margin": ind.condition_margin}


def cmd_tune(args, cfg: RunConfig) -> int:
    if bool(args.model) == bool(args.against_plant):
        raise ConfigError("tune needs exactly one of --model PATH or --against-plant")
    if args.model:
        try:
            system = NarxSystem(load_model(args.model))
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot load model {args.model}: {exc}") from None
        source = {"model": Path(args.model).name}
    else:
        system = PlantSystem(cfg.plant, cfg.disturbance, CONTROL_PERIOD)
        source = {"plant": True}
    kinds = [args.trajectory] if args.trajectory else ["sine", "step"]
    specs = {k: cfg.trajectory_spec(k) for k in kinds}

    doc = {"format": GAINS_FORMAT, "version": GAINS_VERSION, "system": source, "preset": args.preset,
           "seed": cfg.seed, "profile": cfg.profile,
           "iga": {k: v for k, v in asdict(cfg.iga).items() if k not in ("bounds", "condition_bounds")},
           "bounds": asdict(cfg.iga.bounds), "trajectories": {}}
    results = {}
    for kind, spec in specs.items():
        results[kind] = tune(system, spec, cfg.iga, cfg.controller_state())

    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    infeasible = []
    for kind, res in results.items():
        doc["trajectories"][kind] = {
            "trajectory": asdict(specs[kind]),
            "best": _individual_dict(res.best),
            "infeasible": res.infeasible,
            "evaluations": len(res.audit),
            "ranked": [_individual_dict(ind) for ind in res.ranked],
        }
        _write(out / f"audit_{kind}.tsv", res.audit.text())
        if res.infeasible:
            infeasible.append(kind)
        g = res.gains
        print(f"tune[{kind}]: alpha1={g.alpha1:.4f} alpha2={g.alpha2:.4f} ks={g.ks:.4f} beta={g.beta:.4f} "
              f"cost={res.best.fitness:.4f} ({len(res.audit)} evaluations)")
    _write(out / "gains.json", _dump(doc))
    if infeasible:
        print(f"tune: INFEASIBLE for {', '.join(infeasible)}: no individual met the gain condition "
              f"with a bounded rollout", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# -- evaluate -------------------------------------------------------------


def _parse_inline(text: str) -> RiseGains:
    try:
        vals = [float(v) for v in text.split(",")]
        return RiseGains.from_sequence(vals)
    except ValueError as exc:
        raise ConfigError(f"--inline-gains expects alpha1,alpha2,ks,beta: {exc}") from None


def _gains_from_file(path: str, kind: str) -> RiseGains:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from None
    if doc.get("format") != GAINS_FORMAT:
        raise ConfigError(f"{path} is not a gains file")
    try:
        best = doc["trajectories"][kind]["best"]
    except KeyError:
        raise ConfigError(f"{path} holds no gains for trajectory {kind!r}") from None
    return RiseGains(best["alpha1"], best["alpha2"], best["ks"], best["beta"])


def empirical_gain_sets() -> list[tuple[str, RiseGains]]:
    """The packaged empirical (untuned) comparison gain sets."""
    text = resources.files("nmesrise").joinpath("data/empirical_gains.json").read_text()
    return [(g["label"], RiseGains(g["alpha1"], g["alpha2"], g["ks"], g["beta"]))
            for g in json.loads(text)["gain_sets"]]


def _plot_csv(log: SessionLog, path: Path) -> None:
    theta_d, _ = reference_series(log.trajectory, log.t)
    lines = ["t_s,theta_rad,theta_d_rad,pw_us"]
    lines += [f"{t!r},{a!r},{d!r},{u!r}" for t, a, d, u in
              zip(log.t.tolist(), log.angle.tolist(), theta_d.tolist(), log.pw.tolist())]
    _write(path, "\n".join(lines) + "\n")


COMPARE_HEADER = "label,source,alpha1,alpha2,ks,beta,condition_margin,rmse_deg,tec_s,avstd_mean_deg,avstd_std_deg,diverged"


def _compare_row(label, source, gains, margin, metrics, diverged) -> str:
    av = metrics["avstd_op_deg"] or ["", ""]
    tec = "NC" if metrics["tec_s"] is None else repr(metrics["tec_s"])
    cells = [label, source, *[repr(v) for v in gains.as_tuple()], repr(margin), repr(metrics["rmse_deg"]), tec,
             *(repr(v) if v != "" else "" for v in av), str(int(diverged))]
    return ",".join(cells)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    kind = args.trajectory or "sine"
    if bool(args.gains) == bool(args.inline_gains):
        raise ConfigError("evaluate needs exactly one of --gains PATH or --inline-gains a1,a2,ks,beta")
    if args.session < 1:
        raise ConfigError("--session must be >= 1")
    gains = _gains_from_file(args.gains, kind) if args.gains else _parse_inline(args.inline_gains)
    source = "iga" if args.gains else "inline"
    spec = cfg.trajectory_spec(kind)
    arms = [("tuned", source, gains)]
    if args.compare_empirical:
        arms += [(label, "empirical", g) for label, g in empirical_gain_sets()]

    system = PlantSystem(cfg.plant, cfg.disturbance, CONTROL_PERIOD)
    out = _out_dir(args, cfg) / f"evaluate_{kind}"
    out.mkdir(parents=True, exist_ok=True)
    summary = {"trajectory": asdict(spec), "profile": cfg.profile, "seed": cfg.seed, "arms": {}}
    rows = [COMPARE_HEADER]
    any_diverged = False
    for label, src, g in arms:
        try:
            log = run_closed_loop(system, g, spec, cfg.controller_state(), cfg.subject, args.session, src)
            diverged = False
        except DivergenceError as exc:
            log, diverged = exc.partial, True
            any_diverged = True
        log.meta.update({"stim_amplitude_ma": STIM_AMPLITUDE_MA[cfg.profile], "profile": cfg.profile,
                         "label": label, "diverged": diverged})
        write_csv(log, out / f"{label}.csv")
        _write(out / f"{label}.meta.json", _dump(log_meta(log)))
        _plot_csv(log, out / f"{label}_plot.csv")
        if args.record and label == "tuned":
            save_log(log, _sessions_dir(args, cfg))
        margin = check_gain_condition(g, cfg.iga.condition_bounds).margin
        metrics = log_metrics(log).as_dict() if len(log) else {"rmse_deg": None, "tec_s": None,
                                                                "avstd_op_deg": None}
        summary["arms"][label] = {"source": src, "gains": g.as_dict(), "condition_margin": margin,
                                  "diverged": diverged, "rows": len(log), "metrics": metrics}
        rows.append(_compare_row(label, src, g, margin, metrics, diverged))
        tec = "NC" if metrics["tec_s"] is None else f"{metrics['tec_s']:.2f} s"
        print(f"evaluate[{kind}] {label}: RMSE={metrics['rmse_deg']:.3f} deg TEC={tec}"
              + (" DIVERGED" if diverged else ""))

    _write(out / "metrics.json", _dump(summary))
    if args.compare_empirical:
        _write(out / "compare.csv", "\n".join(rows) + "\n")
    if any_diverged:
        print("evaluate: closed loop diverged; partial outputs written", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# -- report ---------------------------------------------------------------


def _report_targets(paths: list[str]) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found += [c for c in sorted(p.rglob("*.csv")) if c.with_name(c.stem + ".meta.json").exists()]
        elif p.exists():
            found.append(p)
        else:
            raise DataError(f"{p} does not exist")
    if not found:
        raise DataError("no session logs found")
    return found


def _audit_summary(path: Path) -> dict:
    lines = path.read_text().split("\n")
    if not lines or lines[0] != AuditLog.HEADER:
        raise DataError(f"{path}:1: not an audit log")
    recs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 9:
            raise DataError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        try:
            recs.append((parts[0], float(parts[7]), *map(float, parts[3:7])))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field") from None
    best = min(recs, key=lambda r: r[1:]) if recs else None
    return {"evaluations": len(recs),
            "by_phase": {ph: sum(1 for r in recs if r[0] == ph) for ph in sorted({r[0] for r in recs})},
            "best": None if best is None else dict(zip(("alpha1", "alpha2", "ks", "beta"), best[2:]),
                                                    cost=best[1])}


def cmd_report(args, cfg: RunConfig) -> int:
    doc = {"logs": {}, "audits": {}}
    for p in _report_targets(args.paths) if args.paths else []:
        try:
            log = load_log(p)
        except LogFormatError as exc:
            raise DataError(str(exc)) from None
        entry = {"subject": log.subject, "session": log.session, "kind": log.kind, "rows": len(log)}
        if log.trajectory is not None and len(log):
            entry["metrics"] = log_metrics(log).as_dict()
        doc["logs"][str(p)] = entry
    for a in args.audit or []:
        doc["audits"][a] = _audit_summary(Path(a))
    if not doc["logs"] and not doc["audits"]:
        raise ConfigError("report needs log paths and/or --audit files")
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    text = _dump(doc)
    _write(out / "report.json", text)
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for excitation, training and tuning")
    common.add_argument("--out", help="output directory (default from config: out)")
    common.add_argument("--sessions", help="session log root (default from config: sessions)")
    common.add_argument("--profile", choices=("healthy", "sci"))
    common.add_argument("--trajectory", choices=("sine", "step"))
    common.add_argument("--preset", choices=("first", "later"), help="IGA hyperparameter preset")

    ap = argparse.ArgumentParser(prog="nmesrise", description="RISE knee-angle control: simulate, identify, tune, evaluate")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", parents=[common], help="open-loop plant rollout under the excitation (or a constant PW)")
    p.add_argument("--pw", type=float, help="constant pulse width in us instead of the random staircase")
    p.add_argument("--duration", type=float, help="seconds (default: excitation duration)")
    p.add_argument("--substeps", type=int, default=4, help="RK4 steps per sample")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("identify", parents=[common], help="train the NARX model from session logs")
    p.add_argument("--synthetic", action="store_true", help="first record excitation sessions from the plant")
    p.add_argument("--n-sessions", type=int, default=1, help="number of synthetic sessions to record")
    p.add_argument("--control-only", action="store_true", help="pool only IGA-tuned control logs")
    p.add_argument("--lag", type=int, default=1, help="input and output lag order")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("tune", parents=[common], help="IGA gain tuning (sine and step unless --trajectory)")
    p.add_argument("--model", help="identified model file to tune against")
    p.add_argument("--against-plant", action="store_true", help="tune against the synthetic plant directly")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", parents=[common], help="closed-loop run on the plant with given gains")
    p.add_argument("--gains", help="gains file written by tune")
    p.add_argument("--inline-gains", help="alpha1,alpha2,ks,beta")
    p.add_argument("--compare-empirical", action="store_true", help="also run the packaged empirical gain sets")
    p.add_argument("--session", type=int, default=1, help="session index recorded in the log")
    p.add_argument("--record", action="store_true", help="also store the tuned log in the sessions directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="recompute metrics from logs and summarize audit files")
    p.add_argument("paths", nargs="*", help="log CSV files or directories")
    p.add_argument("--audit", action="append", help="audit TSV written by tune")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, profile=args.profile, preset=args.preset)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
