import csv
import json
import math

import pytest

from nmesrise.cli import COMPARE_HEADER, main
from nmesrise.session import CSV_HEADER, load_log, log_metrics

FAST = {"train": {"max_epochs": 40, "hidden_size": 32}, "iga": {"fitness_horizon": 5.0},
        "trajectory": {"duration": 10.0}, "excitation": {"duration": 30.0}}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for key in list(__import__("os").environ):
        if key.startswith("NMESRISE_") and key != "NMESRISE_PURE_PYTHON":
            monkeypatch.delenv(key)
    (tmp_path / "fast.json").write_text(json.dumps(FAST))
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_sim_writes_log(workdir):
    assert run("sim", "--pw", 200, "--duration", 5) == 0
    lines = (workdir / "out" / "sim.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 251
    assert math.degrees(float(lines[-1].split(",")[2])) == pytest.approx(30.0, abs=3.0)


def test_identify_synthetic_smoke(workdir):
    assert run("identify", "--synthetic", "--seed", 7, "--config", "fast.json") == 0
    rep = json.loads((workdir / "out" / "identify_report.json").read_text())
    assert "r2" in rep["validation"] and rep["validation"]["r2"] > 0.9
    assert rep["pooled_rows"] == 1499
    assert json.loads((workdir / "out" / "model.json").read_text())["format"] == "nmesrise.narx"


def test_identify_control_only_pooled_rows(workdir):
    assert run("identify", "--synthetic", "--config", "fast.json") == 0
    for session in (2, 3):
        assert run("evaluate", "--inline-gains", "5,4,60,4", "--config", "fast.json", "--session", session,
                   "--record") == 0
    # inline gains are not IGA provenance; relabel the stored logs as tuned runs
    for session in (2, 3):
        meta_path = workdir / "sessions" / "synthetic" / str(session) / "control.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["gains_source"] = "iga"
        meta_path.write_text(json.dumps(meta))
    assert run("identify", "--control-only", "--config", "fast.json") == 0
    rep = json.loads((workdir / "out" / "identify_report.json").read_text())
    assert [s["session"] for s in rep["sessions"]] == [2, 3]
    assert rep["pooled_rows"] == sum(s["rows"] - 1 for s in rep["sessions"]) == 2 * (2000 - 1)


def test_identify_corrupt_csv_exit_code(workdir, capsys):
    assert run("identify", "--synthetic", "--config", "fast.json") == 0
    path = workdir / "sessions" / "synthetic" / "1" / "identification.csv"
    lines = path.read_text().splitlines()
    lines[41] = "0.8,oops,0.1"
    path.write_text("\n".join(lines) + "\n")
    assert run("identify", "--config", "fast.json") == 3
    assert ":42:" in capsys.readouterr().err


def test_identify_without_sessions_is_data_error(workdir):
    assert run("identify", "--sessions", "nowhere") == 3


def test_invalid_config_exit_2_without_outputs(workdir):
    (workdir / "bad.json").write_text(json.dumps({"iga": {"population_size": 0}}))
    for cmd in (["identify", "--synthetic"], ["tune", "--against-plant"], ["evaluate", "--inline-gains", "1,2,3,4"],
                ["sim"]):
        assert run(*cmd, "--config", "bad.json") == 2
    assert not (workdir / "out").exists() and not (workdir / "sessions").exists()
    assert run("evaluate", "--inline-gains", "1,2,-3,4") == 2
    assert run("tune") == 2
    assert not (workdir / "out").exists()


def test_env_override_reaches_cli(workdir, monkeypatch):
    monkeypatch.setenv("NMESRISE_IGA__POPULATION_SIZE", "0")
    assert run("tune", "--against-plant") == 2


def test_tune_presets_and_determinism(workdir):
    assert run("tune", "--against-plant", "--trajectory", "sine", "--preset", "first", "--seed", 5,
               "--config", "fast.json", "--out", "a") == 0
    assert run("tune", "--against-plant", "--trajectory", "sine", "--preset", "first", "--seed", 5,
               "--config", "fast.json", "--out", "b") == 0
    a = (workdir / "a" / "gains.json").read_bytes()
    assert a == (workdir / "b" / "gains.json").read_bytes()
    assert (workdir / "a" / "audit_sine.tsv").read_bytes() == (workdir / "b" / "audit_sine.tsv").read_bytes()
    doc = json.loads(a)
    assert (doc["iga"]["population_size"], doc["iga"]["mutation_rate"], doc["iga"]["generations"]) == (8, 0.5, 6)
    assert doc["trajectories"]["sine"]["evaluations"] == 8 + 6 + 6
    assert run("tune", "--against-plant", "--trajectory", "sine", "--preset", "later", "--config", "fast.json",
               "--out", "c") == 0
    doc = json.loads((workdir / "c" / "gains.json").read_text())
    assert (doc["iga"]["population_size"], doc["iga"]["mutation_rate"], doc["iga"]["generations"]) == (10, 0.3, 30)


def test_tune_both_trajectories_by_default(workdir):
    assert run("tune", "--against-plant", "--config", "fast.json") == 0
    doc = json.loads((workdir / "out" / "gains.json").read_text())
    assert sorted(doc["trajectories"]) == ["sine", "step"]
    assert (workdir / "out" / "audit_step.tsv").exists()


def test_tune_infeasible_exit_4(workdir, capsys):
    cfg = {**FAST, "iga": {"fitness_horizon": 2.0, "bounds": {"alpha2": [0.5, 1.0], "beta": [1.0, 1.5]}}}
    (workdir / "inf.json").write_text(json.dumps(cfg))
    assert run("tune", "--against-plant", "--trajectory", "sine", "--config", "inf.json") == 4
    assert "INFEASIBLE" in capsys.readouterr().err
    assert json.loads((workdir / "out" / "gains.json").read_text())["trajectories"]["sine"]["infeasible"] is True


def test_evaluate_outputs_and_report_round_trip(workdir, capsys):
    assert run("tune", "--against-plant", "--trajectory", "sine", "--config", "fast.json") == 0
    assert run("evaluate", "--gains", "out/gains.json", "--compare-empirical", "--config", "fast.json") == 0
    ev = workdir / "out" / "evaluate_sine"
    rows = list(csv.reader((ev / "compare.csv").read_text().splitlines()))
    assert ",".join(rows[0]) == COMPARE_HEADER
    assert [r[0] for r in rows[1:]] == ["tuned"] + [f"empirical_{i}" for i in range(1, 6)]
    plot = (ev / "tuned_plot.csv").read_text().splitlines()
    assert plot[0] == "t_s,theta_rad,theta_d_rad,pw_us" and len(plot) == 2001
    summary = json.loads((ev / "metrics.json").read_text())
    capsys.readouterr()
    assert run("report", str(ev)) == 0
    report = json.loads(capsys.readouterr().out)
    for label, arm in summary["arms"].items():
        assert report["logs"][str(ev / f"{label}.csv")]["metrics"] == arm["metrics"]
    assert log_metrics(load_log(ev / "tuned.csv")).as_dict() == summary["arms"]["tuned"]["metrics"]


def test_evaluate_gains_file_missing_trajectory(workdir):
    assert run("tune", "--against-plant", "--trajectory", "sine", "--config", "fast.json") == 0
    assert run("evaluate", "--gains", "out/gains.json", "--trajectory", "step") == 2


def test_evaluate_sci_step_targets_30(workdir):
    assert run("evaluate", "--inline-gains", "6,4,60,4", "--trajectory", "step", "--profile", "sci") == 0
    log = load_log(workdir / "out" / "evaluate_step" / "tuned.csv")
    assert log.trajectory.theta_high == 30.0 and log.trajectory.operating_point == 30.0
    assert len(log) == 8000  # 40 s at 5 ms
    assert log.meta["stim_amplitude_ma"] == 120


def test_evaluate_divergence_exit_4_with_partial_outputs(workdir):
    cfg = {"disturbance": {"kind": "tremor", "tremor_amp": 100.0, "tremor_freq": 0.2}}
    (workdir / "shake.json").write_text(json.dumps(cfg))
    assert run("evaluate", "--inline-gains", "8,8,80,6", "--trajectory", "step", "--config", "shake.json") == 4
    summary = json.loads((workdir / "out" / "evaluate_step" / "metrics.json").read_text())
    assert summary["arms"]["tuned"]["diverged"] is True
    assert 0 < summary["arms"]["tuned"]["rows"] < 12000


def test_report_audit_summary(workdir, capsys):
    assert run("tune", "--against-plant", "--trajectory", "sine", "--config", "fast.json") == 0
    gains = json.loads((workdir / "out" / "gains.json").read_text())["trajectories"]["sine"]
    capsys.readouterr()
    assert run("report", "--audit", "out/audit_sine.tsv") == 0
    rep = json.loads(capsys.readouterr().out)["audits"]["out/audit_sine.tsv"]
    assert rep["evaluations"] == gains["evaluations"]
    assert rep["best"]["cost"] == min(r["cost"] for r in gains["ranked"])
    assert run("report") == 2
    assert run("report", "missing.csv") == 3
