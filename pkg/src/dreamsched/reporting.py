"""Run orchestration and report emission.

A RunResult couples a run log with its UXCost report and summary statistics.
emit_report turns a batch of results into a summary document plus four CSV
tables (uxcost comparison, violations/energy, variant usage, tuning trace),
all with stable ordering so repeated emission is byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .hardware import CostTable, SystemSpec, worst_case_model_energy
from .policies import make_policy
from .scheduler import DreamScheduler, MapScoreParams
from .sim import RunLog, Simulation, WindowRecord
from .tuning import OnlineTuner, SearchConfig, UXCostReport, compute_uxcost
from .workload import ScenarioSpec

log = logging.getLogger(__name__)


def worst_case_energies(scenario: ScenarioSpec, system: SystemSpec,
                        costs: CostTable) -> dict[str, float]:
    """Per-model worst-case full-network energy, the UXCost normalizer."""
    return {m.model_id: worst_case_model_energy(costs, m, system)
            for m in scenario.models}


@dataclass
class RunResult:
    scenario_id: str
    system_id: str
    policy: str
    seed: int
    runlog: RunLog
    report: UXCostReport

    @property
    def uxcost(self) -> Optional[float]:
        return self.report.uxcost

    def frame_counts(self) -> tuple[int, int, int]:
        """(total, violated, dropped) over frames with deadlines in the horizon."""
        total = violated = dropped = 0
        for stats in self.report.per_model.values():
            total += stats.total_frames
            violated += stats.violated_frames
        dropped = len(self.runlog.drops)
        return total, violated, dropped

    def variant_histogram(self, model_id: str, switch_point: int) -> dict[str, float]:
        """Share of frames per committed variant, over frames that actually
        dispatched the switch-point layer."""
        counts: dict[str, int] = {}
        for f in self.runlog.frames:
            if f.model_id != model_id or f.layers_executed <= switch_point:
                continue
            counts[f.variant_id] = counts.get(f.variant_id, 0) + 1
        n = sum(counts.values())
        return {vid: c / n for vid, c in sorted(counts.items())} if n else {}


def run_policy(scenario: ScenarioSpec, system: SystemSpec, costs: CostTable,
               policy_name: str, *, alpha: float = 1.0, beta: float = 1.0,
               theta_ms: float = 1.0, seed: Optional[int] = None,
               duration_ms: Optional[float] = None,
               edge_probability_override: Optional[float] = None,
               record_breakdown: bool = True, verify: bool = True) -> RunResult:
    """Run one scenario under one policy and score the whole horizon."""
    policy = make_policy(policy_name, alpha=alpha, beta=beta, theta_ms=theta_ms,
                         record_breakdown=record_breakdown)
    sim = Simulation(scenario, system, costs, policy, seed=seed, duration_ms=duration_ms,
                     edge_probability_override=edge_probability_override)
    runlog = sim.run()
    if verify:
        sim.verify_conservation()
    report = compute_uxcost(runlog, worst_case_energies(scenario, system, costs))
    return RunResult(scenario_id=scenario.scenario_id, system_id=system.system_id,
                     policy=policy_name, seed=sim.seed, runlog=runlog, report=report)


def run_online_tuned(scenario: ScenarioSpec, system: SystemSpec, costs: CostTable,
                     policy_name: str, start: tuple[float, float],
                     config: Optional[SearchConfig] = None, *,
                     seed: Optional[int] = None,
                     duration_ms: Optional[float] = None,
                     verify: bool = True) -> RunResult:
    """Run a dream policy while the online tuner adjusts (alpha, beta) at every
    evaluation-window boundary. The per-window trajectory lands in the run log."""
    cfg = config if config is not None else SearchConfig()
    tuner = OnlineTuner(start, cfg)
    a0, b0 = tuner.current_probe()
    policy = make_policy(policy_name, alpha=a0, beta=b0)
    if not isinstance(policy, DreamScheduler):
        raise ValueError(f"online tuning needs a dream policy, not {policy_name}")
    wc = worst_case_energies(scenario, system, costs)

    def on_window(sim: Simulation, start_ms: float, end_ms: float) -> None:
        report = compute_uxcost(sim.runlog, wc, start_ms, end_ms)
        sim.runlog.windows.append(WindowRecord(
            start=start_ms, end=end_ms, alpha=policy.params.alpha,
            beta=policy.params.beta, uxcost=report.uxcost))
        nxt = tuner.on_window(report.uxcost, set(sim.window_arrivals))
        policy.params = MapScoreParams(alpha=nxt[0], beta=nxt[1])

    sim = Simulation(scenario, system, costs, policy, seed=seed, duration_ms=duration_ms,
                     window_ms=cfg.eval_window_s * 1000.0, on_window=on_window)
    runlog = sim.run()
    if verify:
        sim.verify_conservation()
    report = compute_uxcost(runlog, wc)
    return RunResult(scenario_id=scenario.scenario_id, system_id=system.system_id,
                     policy=policy_name, seed=sim.seed, runlog=runlog, report=report)


def make_uxcost_evaluator(scenario: ScenarioSpec, system: SystemSpec, costs: CostTable,
                          policy_name: str = "dream-mapscore", *,
                          seed: Optional[int] = None,
                          duration_ms: Optional[float] = None) -> Callable[[float, float], float]:
    """Evaluator for the offline search: each candidate (alpha, beta) replays the
    same seeded scenario on a fresh simulation and returns its UXCost."""

    def evaluate(alpha: float, beta: float) -> float:
        result = run_policy(scenario, system, costs, policy_name, alpha=alpha, beta=beta,
                            seed=seed, duration_ms=duration_ms,
                            record_breakdown=False, verify=False)
        if result.uxcost is None:
            raise ValueError("evaluation window produced no frames; extend the horizon")
        return result.uxcost

    return evaluate


def geometric_mean(values: Sequence[float]) -> float:
    vals = [v for v in values]
    if not vals:
        raise ValueError("geometric mean of nothing")
    if any(v <= 0 for v in vals):
        raise ValueError("geometric mean needs positive values")
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


@dataclass
class ComparisonReport:
    rows: list[dict]

    def geomean_uxcost_by_policy(self) -> dict[str, float]:
        groups: dict[str, list[float]] = {}
        for r in self.rows:
            if r["uxcost"] is not None:
                groups.setdefault(r["policy"], []).append(r["uxcost"])
        return {p: geometric_mean(v) for p, v in sorted(groups.items())}


def comparison_rows(results: Sequence[RunResult]) -> ComparisonReport:
    """One row per run, with uxcost ratios against the first policy listed for
    the same (scenario, system) pair."""
    baseline: dict[tuple[str, str], float] = {}
    rows = []
    for r in results:
        key = (r.scenario_id, r.system_id)
        if key not in baseline and r.uxcost is not None:
            baseline[key] = r.uxcost
        total, violated, dropped = r.frame_counts()
        rows.append({
            "scenario": r.scenario_id, "system": r.system_id, "policy": r.policy,
            "seed": r.seed, "uxcost": r.uxcost,
            "uxcost_vs_first": (r.uxcost / baseline[key]
                                if r.uxcost is not None and key in baseline
                                and baseline[key] > 0 else None),
            "violation_rate_sum": r.report.overall_rate,
            "norm_energy_sum": r.report.overall_energy,
            "frames": total, "violated": violated, "dropped": dropped,
            "energy_mj": r.runlog.total_energy_mj(),
        })
    return ComparisonReport(rows)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(results: Sequence[RunResult], out_dir,
                scenarios: Optional[dict[str, ScenarioSpec]] = None) -> list[Path]:
    """Write summary.json plus the four CSV tables for a batch of runs.

    Emission is deterministic: same results, same bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comparison = comparison_rows(results)

    summary = {
        "runs": comparison.rows,
        "geomean_uxcost_by_policy": comparison.geomean_uxcost_by_policy(),
    }
    paths = []
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    paths.append(summary_path)

    uxcost_path = out / "uxcost.csv"
    header = ["scenario", "system", "policy", "seed", "uxcost", "uxcost_vs_first"]
    _write_csv(uxcost_path, header,
               [[_fmt(r[c]) for c in header] for r in comparison.rows])
    paths.append(uxcost_path)

    ve_path = out / "violations_energy.csv"
    header = ["scenario", "system", "policy", "frames", "violated", "dropped",
              "violation_rate_sum", "norm_energy_sum", "energy_mj"]
    _write_csv(ve_path, header,
               [[_fmt(r[c]) for c in header] for r in comparison.rows])
    paths.append(ve_path)

    var_rows = []
    for r in results:
        spec = scenarios.get(r.scenario_id) if scenarios else None
        if spec is None:
            continue
        for m in spec.models:
            if not m.variants:
                continue
            hist = r.variant_histogram(m.model_id, m.switch_point)
            for vid, frac in hist.items():
                var_rows.append([r.scenario_id, r.system_id, r.policy,
                                 m.model_id, vid, _fmt(frac)])
    var_path = out / "variants.csv"
    _write_csv(var_path, ["scenario", "system", "policy", "model", "variant", "fraction"],
               var_rows)
    paths.append(var_path)

    tune_rows = []
    for r in results:
        for w in r.runlog.windows:
            tune_rows.append([r.scenario_id, r.system_id, r.policy,
                              _fmt(w.start), _fmt(w.end), _fmt(w.alpha), _fmt(w.beta),
                              _fmt(w.uxcost)])
    tune_path = out / "tuning_trace.csv"
    _write_csv(tune_path, ["scenario", "system", "policy", "window_start", "window_end",
                           "alpha", "beta", "uxcost"], tune_rows)
    paths.append(tune_path)
    return paths


@dataclass
class SweepPoint:
    prob: float
    result: RunResult


def sweep_cascade_probability(scenario: ScenarioSpec, probs: Sequence[float],
                              system: SystemSpec, costs: CostTable,
                              policies: Sequence[str], *,
                              seed: Optional[int] = None,
                              duration_ms: Optional[float] = None) -> list[SweepPoint]:
    """Re-run each (probability, policy) pair with control-edge activation
    probabilities overridden, everything else identical. Shared per-frame draws
    make the activation sets monotone in the probability."""
    points = []
    for p in probs:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"cascade probability {p} outside [0, 1]")
        for name in policies:
            r = run_policy(scenario, system, costs, name, seed=seed,
                           duration_ms=duration_ms, edge_probability_override=p,
                           record_breakdown=False)
            points.append(SweepPoint(prob=p, result=r))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], path) -> Path:
    header = ["prob", "scenario", "system", "policy", "uxcost",
              "frames", "violated", "dropped", "energy_mj"]
    rows = []
    for pt in points:
        r = pt.result
        total, violated, dropped = r.frame_counts()
        rows.append([_fmt(pt.prob), r.scenario_id, r.system_id, r.policy,
                     _fmt(r.uxcost), total, violated, dropped,
                     _fmt(r.runlog.total_energy_mj())])
    path = Path(path)
    _write_csv(path, header, rows)
    return path
