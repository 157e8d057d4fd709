"""Command-line entry points, exercised in-process."""

from __future__ import annotations

import json

import pytest

from dreamsched.cli import main

SCENARIO_YAML = """\
scenario_id: clitest
duration_s: 0.5
seed: 11
models:
  - model_id: cam
    fps: 20.0
    layers:
      - {layer_id: 0, op_kind: conv, work_units: 12.0, activation_bytes: 2000.0}
      - {layer_id: 1, op_kind: fc, work_units: 6.0, activation_bytes: 500.0}
  - model_id: fuse
    fps: 20.0
    layers:
      - {layer_id: 0, op_kind: attention, work_units: 8.0, activation_bytes: 1000.0}
pipelines:
  - pipeline_id: main
    members: [cam, fuse]
    edges:
      - {parent: cam, child: fuse, kind: control, p: 0.7}
"""

SYSTEM_YAML = """\
system_id: rig
dram_energy_per_byte: 1.0e-7
accelerators:
  - {accelerator_id: 0, label: big, dataflow: WS, pe_count: 24}
  - {accelerator_id: 1, label: small, dataflow: OS, pe_count: 12}
"""


@pytest.fixture
def configs(tmp_path):
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text(SCENARIO_YAML)
    system = tmp_path / "system.yaml"
    system.write_text(SYSTEM_YAML)
    return scenario, system


def test_run_writes_log_costs_and_report(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "out"
    rc = main(["run", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--out", str(out)])
    assert rc == 0
    assert (out / "runlog.jsonl").exists()
    assert (out / "costs.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "uxcost.csv").exists()
    stdout = capsys.readouterr().out
    assert "scenario=clitest" in stdout
    assert "uxcost=" in stdout

    # the emitted cost table feeds straight back in
    rc = main(["run", "--scenario", str(scenario), "--system", str(system),
               "--costs", str(out / "costs.csv"), "--policy", "edf",
               "--out", str(tmp_path / "out2")])
    assert rc == 0
    meta1 = json.loads((out / "runlog.jsonl").read_text().splitlines()[0])
    assert meta1["scenario_id"] == "clitest"


def test_run_seed_and_duration_overrides(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "o"
    rc = main(["run", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--seed", "99", "--duration", "0.2",
               "--out", str(out)])
    assert rc == 0
    meta = json.loads((out / "runlog.jsonl").read_text().splitlines()[0])
    assert meta["seed"] == 99
    assert meta["duration_ms"] == 200.0


def test_validate_accepts_good_config(configs, capsys):
    scenario, system = configs
    assert main(["validate", str(scenario)]) == 0
    assert main(["validate", str(scenario), "--system", str(system)]) == 0
    out = capsys.readouterr().out
    assert "ok: scenario clitest" in out
    assert "2 accelerators" in out


def test_validate_rejects_semantic_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SCENARIO_YAML.replace("fps: 20.0", "fps: 0.0", 1))
    rc = main(["validate", str(bad)])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_validate_rejects_syntax_error(tmp_path, capsys):
    bad = tmp_path / "broken.yaml"
    bad.write_text("scenario_id: x\nmodels: [1, 2\n")
    assert main(["validate", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err


def test_missing_file_is_a_config_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "ghost.yaml")]) == 1
    assert "config error" in capsys.readouterr().err


def test_sweep_writes_csv(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "sweepout"
    rc = main(["sweep", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--probs", "0.3,0.9",
               "--policies", "fcfs,dream-full", "--out", str(out)])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5  # header + 2 probs x 2 policies
    assert "wrote" in capsys.readouterr().out


def test_sweep_rejects_unknown_policy(configs, tmp_path, capsys):
    scenario, system = configs
    rc = main(["sweep", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--policies", "fcfs,turbo",
               "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_tune_offline_writes_trace_and_best(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "tuneout"
    rc = main(["tune", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--mode", "offline",
               "--threshold", "0.2", "--out", str(out)])
    assert rc == 0
    best = json.loads((out / "best_params.json").read_text())
    assert 0.0 <= best["alpha"] <= 2.0 and 0.0 <= best["beta"] <= 2.0
    assert best["evaluations"] > 0
    trace = (out / "search_trace.csv").read_text().splitlines()
    assert trace[0].startswith("iteration,alpha,beta")
    assert len(trace) >= 2
    assert "best alpha=" in capsys.readouterr().out


def test_tune_online_writes_log_and_window_trace(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "onlineout"
    rc = main(["tune", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--mode", "online", "--start", "0.0,2.0",
               "--window", "0.1", "--out", str(out)])
    assert rc == 0
    assert (out / "runlog.jsonl").exists()
    trace = (out / "tuning_trace.csv").read_text().splitlines()
    assert len(trace) == 6  # header + one row per 100 ms window
    assert "windows=5" in capsys.readouterr().out


def test_tune_rejects_malformed_start(configs, tmp_path, capsys):
    scenario, system = configs
    rc = main(["tune", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--start", "1.0", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_report_summarizes_logs(configs, tmp_path, capsys):
    scenario, system = configs
    out = tmp_path / "runs" / "one"
    main(["run", "--scenario", str(scenario), "--system", str(system),
          "--gen-costs", "3", "--out", str(out)])
    capsys.readouterr()
    rc = main(["report", str(tmp_path / "runs")])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "found 1 run logs" in stdout
    assert "scenario=clitest" in stdout


def test_report_on_empty_directory_fails(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_unexpected_failures_exit_two(configs, tmp_path, capsys):
    scenario, system = configs
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    rc = main(["run", "--scenario", str(scenario), "--system", str(system),
               "--gen-costs", "3", "--out", str(blocker / "sub")])
    assert rc == 2
    assert "runtime error" in capsys.readouterr().err


def test_argparse_rejects_conflicting_cost_sources(configs, tmp_path):
    scenario, system = configs
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", str(scenario), "--system", str(system),
              "--gen-costs", "3", "--costs", "x.csv"])
    assert exc.value.code == 2
