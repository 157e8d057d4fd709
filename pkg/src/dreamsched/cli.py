"""Command-line front end.

Subcommands: run one scenario/policy pair, sweep cascade probabilities,
tune score parameters offline or online, validate a config, or rebuild
reports from stored run logs. Exit codes: 0 on success, 1 for configuration
errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .hardware import (
    AffinityParams,
    HardwareError,
    generate_synthetic_costs,
    load_cost_table_file,
    load_system,
    write_cost_table,
)
from .policies import POLICY_NAMES
from .reporting import (
    RunResult,
    comparison_rows,
    emit_report,
    make_uxcost_evaluator,
    run_online_tuned,
    run_policy,
    sweep_cascade_probability,
    worst_case_energies,
    write_sweep_csv,
)
from .tuning import SearchConfig, compute_uxcost, finite_difference_search
from .workload import ScenarioError, load_scenario

log = logging.getLogger("dreamsched")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _add_common(p: argparse.ArgumentParser, *, policy: bool = True) -> None:
    p.add_argument("--scenario", required=True, help="scenario config file")
    p.add_argument("--system", required=True, help="system config file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--costs", help="cost table CSV")
    group.add_argument("--gen-costs", type=int, metavar="SEED",
                       help="generate a synthetic cost table from this seed")
    if policy:
        p.add_argument("--policy", choices=POLICY_NAMES, default="dream-full")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--duration", type=float, default=None, metavar="S",
                   help="override the scenario duration, in seconds")
    p.add_argument("--out", default=None, help="output directory")


def _load_inputs(args):
    scenario = load_scenario(args.scenario)
    system = load_system(args.system)
    if args.costs:
        costs = load_cost_table_file(args.costs, scenario.models, system)
    else:
        costs = generate_synthetic_costs(system, scenario.models, args.gen_costs,
                                         AffinityParams())
    return scenario, system, costs


def _duration_ms(args):
    return args.duration * 1000.0 if args.duration is not None else None


def cmd_run(args) -> int:
    scenario, system, costs = _load_inputs(args)
    result = run_policy(scenario, system, costs, args.policy,
                        alpha=args.alpha, beta=args.beta, theta_ms=args.theta,
                        seed=args.seed, duration_ms=_duration_ms(args))
    out = Path(args.out or f"runs/{scenario.scenario_id}-{args.policy}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "runlog.jsonl").write_text(result.runlog.to_jsonl(), encoding="utf-8")
    if args.gen_costs is not None:
        write_cost_table(costs, out / "costs.csv")
    emit_report([result], out, scenarios={scenario.scenario_id: scenario})
    total, violated, dropped = result.frame_counts()
    print(f"scenario={scenario.scenario_id} system={system.system_id} "
          f"policy={args.policy} frames={total} violated={violated} "
          f"dropped={dropped} uxcost={result.uxcost}")
    print(f"wrote {out}/runlog.jsonl and report files")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario, system, costs = _load_inputs(args)
    probs = [float(p) for p in args.probs.split(",") if p]
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    for p in policies:
        if p not in POLICY_NAMES:
            raise ScenarioError(f"unknown policy {p!r}")
    points = sweep_cascade_probability(scenario, probs, system, costs, policies,
                                       seed=args.seed, duration_ms=_duration_ms(args))
    out = Path(args.out or f"runs/{scenario.scenario_id}-sweep")
    out.mkdir(parents=True, exist_ok=True)
    path = write_sweep_csv(points, out / "sweep.csv")
    for pt in points:
        total, violated, dropped = pt.result.frame_counts()
        print(f"p={pt.prob:g} policy={pt.result.policy} frames={total} "
              f"violated={violated} dropped={dropped} uxcost={pt.result.uxcost}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tune(args) -> int:
    scenario, system, costs = _load_inputs(args)
    start = tuple(float(x) for x in args.start.split(","))
    if len(start) != 2:
        raise ScenarioError("--start must be alpha,beta")
    config = SearchConfig(initial_radius=args.radius, radius_decay=args.decay,
                          radius_threshold=args.threshold,
                          eval_window_s=args.window)
    out = Path(args.out or f"runs/{scenario.scenario_id}-tune-{args.mode}")
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "offline":
        evaluator = make_uxcost_evaluator(scenario, system, costs, args.policy,
                                          seed=args.seed, duration_ms=_duration_ms(args))
        result = finite_difference_search(evaluator, start, config)
        trace_path = out / "search_trace.csv"
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("iteration,alpha,beta,incumbent_uxcost,radius,best_alpha,"
                     "best_beta,best_uxcost,evaluations\n")
            for i, it in enumerate(result.trace):
                fh.write(f"{i},{it.incumbent[0]!r},{it.incumbent[1]!r},"
                         f"{it.incumbent_value!r},{it.radius!r},{it.best_point[0]!r},"
                         f"{it.best_point[1]!r},{it.best_value!r},{it.evaluations}\n")
        best = {"alpha": result.best_point[0], "beta": result.best_point[1],
                "uxcost": result.best_value, "evaluations": result.evaluations}
        (out / "best_params.json").write_text(json.dumps(best, indent=2) + "\n",
                                              encoding="utf-8")
        print(f"best alpha={best['alpha']:g} beta={best['beta']:g} "
              f"uxcost={best['uxcost']:g} after {best['evaluations']} evaluations")
        print(f"wrote {trace_path} and {out}/best_params.json")
    else:
        result = run_online_tuned(scenario, system, costs, args.policy, start, config,
                                  seed=args.seed, duration_ms=_duration_ms(args))
        (out / "runlog.jsonl").write_text(result.runlog.to_jsonl(), encoding="utf-8")
        emit_report([result], out, scenarios={scenario.scenario_id: scenario})
        last = result.runlog.windows[-1] if result.runlog.windows else None
        print(f"windows={len(result.runlog.windows)} "
              f"final alpha={last.alpha if last else None} "
              f"beta={last.beta if last else None} uxcost={result.uxcost}")
        print(f"wrote {out}/runlog.jsonl and report files")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.file)
    msg = (f"ok: scenario {scenario.scenario_id}: {len(scenario.models)} models, "
           f"{len(scenario.pipelines)} pipelines, duration {scenario.duration_s:g}s")
    if args.system:
        system = load_system(args.system)
        msg += f"; system {system.system_id}: {system.n_accelerators} accelerators"
    print(msg)
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.dir)
    logs = sorted(run_dir.glob("**/runlog.jsonl"))
    if not logs:
        raise ScenarioError(f"no runlog.jsonl files under {run_dir}")
    print(f"found {len(logs)} run logs under {run_dir}")
    for p in logs:
        lines = p.read_text(encoding="utf-8").splitlines()
        meta = json.loads(lines[0])
        frames = sum(1 for ln in lines if '"type": "frame"' in ln)
        drops = sum(1 for ln in lines if '"type": "drop"' in ln)
        print(f"  {p}: scenario={meta['scenario_id']} system={meta['system_id']} "
              f"frames={frames} drops={drops}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dreamsched",
        description="scheduler simulation for real-time multi-model inference")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario under one policy")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0,
                   help="layer-block latency threshold, ms")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep cascade activation probabilities")
    _add_common(p, policy=False)
    p.add_argument("--probs", default="0.5,0.9,0.99",
                   help="comma-separated probabilities")
    p.add_argument("--policies", default="fcfs,edf,layerblock,dream-full",
                   help="comma-separated policy names")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="tune score parameters")
    _add_common(p, policy=False)
    p.add_argument("--mode", choices=("offline", "online"), default="offline")
    p.add_argument("--policy", choices=("dream-mapscore", "dream-smartdrop", "dream-full"),
                   default="dream-mapscore")
    p.add_argument("--start", default="1.0,1.0", help="starting alpha,beta")
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--window", type=float, default=1.0,
                   help="evaluation window, seconds")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("validate", help="parse and validate a scenario config")
    p.add_argument("file", help="scenario config file")
    p.add_argument("--system", default=None, help="system config file to validate too")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="summarize stored run logs")
    p.add_argument("dir", help="directory containing runlog.jsonl files")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, HardwareError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
        log.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
