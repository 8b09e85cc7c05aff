"""Command-line interface.

Subcommands::

    pwadmpc fit-pwa   --season summer --out model.json
    pwadmpc simulate  --strategy distributed-pwa --out runs/
    pwadmpc compare   --strategies distributed-pwa,centralized-pwa --out runs/
    pwadmpc report    --trace runs/distributed-pwa-trace.csv

Exit codes: 0 success, 1 usage error, 2 scenario or configuration error,
3 numerical failure.  ``PWADMPC_OUT`` overrides the default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .admm import LocalSolveError
from .comfort import ComfortError, ComfortParams, PwaComfortModel, PwaFitError, fit_pwa
from .mpc import STRATEGIES, NumericalError
from .qp import QpError
from .sim import (
    MetricsReport,
    Scenario,
    ScenarioError,
    SimulationTrace,
    compare_strategies,
    run_closed_loop,
    write_comparison_csv,
    write_run,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MAE_LIMIT = 0.02
OUT_ENV = "PWADMPC_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_out() -> str:
    return os.environ.get(OUT_ENV, "out")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pwadmpc", description="Distributed PWA-MPC for multi-zone buildings.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit-pwa", help="fit the piecewise-affine comfort surrogate")
    f.add_argument("--season", choices=("summer", "winter"), default="summer")
    f.add_argument("--domain", nargs=2, type=float, metavar=("LO", "HI"), default=(22.0, 30.0),
                   help="temperature range used for both axes (degC)")
    f.add_argument("--split", nargs=2, type=float, metavar=("TA", "TR"), default=None)
    f.add_argument("--affine", choices=("fixed", "derived"), default="fixed",
                   help="surrogate PMV coefficients: published summer values or recomputed for the season")
    f.add_argument("--out", default=None, help="model file (default: $PWADMPC_OUT/pwa-<season>.json)")

    def scenario_args(sp):
        sp.add_argument("--scenario", default=None, help="scenario JSON (default: built-in 36-zone summer day)")
        sp.add_argument("--out", default=None, help="output directory (default: $PWADMPC_OUT or ./out)")
        sp.add_argument("--jobs", type=int, default=1, help="zone-level worker threads")
        sp.add_argument("--weather-seed", type=int, default=None, help="seed of the synthetic weather noise")
        sp.add_argument("--plant-seed", type=int, default=None, help="seed of the plant parameter mismatch")
        sp.add_argument("--steps", type=int, default=None, help="override the simulated duration")
        sp.add_argument("--floors", type=int, default=None, help="override the number of floors")
        sp.add_argument("--pwa", default=None, help="PWA model file to use instead of fitting")

    s = sub.add_parser("simulate", help="closed-loop run of one strategy")
    scenario_args(s)
    s.add_argument("--strategy", choices=STRATEGIES, default="distributed-pwa")

    c = sub.add_parser("compare", help="run several strategies on the same scenario")
    scenario_args(c)
    c.add_argument("--strategies", default=",".join(STRATEGIES), help="comma-separated strategy names")

    r = sub.add_parser("report", help="recompute metrics and plot data from a trace")
    r.add_argument("--trace", required=True)
    r.add_argument("--timing", default=None)
    r.add_argument("--plot-out", default=None, help="long-format plot CSV to write")
    r.add_argument("--c-max", type=float, default=None, help="budget used for the excess metric (W)")
    return p


def _load_scenario(args) -> Scenario:
    over = {}
    if args.scenario:
        path = Path(args.scenario)
        try:
            over = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        base = path.parent
    else:
        base = Path(".")
    if not isinstance(over, dict):
        raise ScenarioError("scenario file must hold a JSON object")
    if args.weather_seed is not None:
        over.setdefault("weather", {})["seed"] = args.weather_seed
    if args.plant_seed is not None:
        over.setdefault("plant", {})["seed"] = args.plant_seed
    if args.steps is not None:
        over["duration_steps"] = args.steps
    if args.floors is not None:
        over.setdefault("topology", {})["floors"] = args.floors
    if args.pwa is not None:
        over.setdefault("pwa", {})["path"] = str(Path(args.pwa).resolve())
    return Scenario.from_dict(over, base_dir=base)


def _summary(m: MetricsReport) -> str:
    return (
        f"{m.strategy}: zones={m.zones} steps={m.steps} avg_power={m.avg_power_w:.2f} W "
        f"cost={m.total_cost_cny:.4f} CNY pmv[min,q1,med,q3,max]=[{m.pmv_min:.3f}, {m.pmv_q1:.3f}, "
        f"{m.pmv_median:.3f}, {m.pmv_q3:.3f}, {m.pmv_max:.3f}] wall={m.wall_time_s:.2f} s "
        f"max_sequential={m.max_sequential_s:.2f} s degraded_steps={m.degraded_steps}"
    )


def cmd_fit(args) -> int:
    params = getattr(ComfortParams, args.season)()
    lo, hi = args.domain
    try:
        model = fit_pwa(params, ((lo, hi), (lo, hi)), args.split, affine=args.affine)
    except PwaFitError as exc:
        print(f"fit-pwa: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(default_out()) / f"pwa-{args.season}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    r = model.report
    print(f"MAE={r.mae:.6f} max_error={r.max_abs_err:.6f} continuity_gap={r.continuity_gap:.3e} -> {out}")
    if r.mae > MAE_LIMIT:
        print(f"fit-pwa: MAE {r.mae:.4f} exceeds {MAE_LIMIT}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args)
    trace, metrics = run_closed_loop(scenario, args.strategy, jobs=args.jobs)
    paths = write_run(args.out or default_out(), trace, metrics)
    print(_summary(metrics))
    if metrics.degraded_steps:
        print(f"warning: {metrics.degraded_steps} step(s) ended in degraded mode", file=sys.stderr)
    print(f"trace: {paths['trace']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in names if s not in STRATEGIES]
    if bad:
        raise UsageError(f"unknown strategy {bad[0]!r}; choose from {', '.join(STRATEGIES)}")
    if len(names) < 2:
        raise UsageError("compare needs at least two strategies")
    scenario = _load_scenario(args)
    out = Path(args.out or default_out())
    rows = compare_strategies(scenario, names, jobs=args.jobs, out_dir=out)
    write_comparison_csv(out / "comparison.csv", rows)
    for r in rows:
        print(", ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    print(f"comparison: {out / 'comparison.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        trace = SimulationTrace.read_csv(args.trace, args.timing, strategy=Path(args.trace).stem.replace("-trace", ""))
    except (OSError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    metrics = MetricsReport.from_trace(trace, args.c_max)
    if args.plot_out:
        trace.write_plot_csv(args.plot_out)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"fit-pwa": cmd_fit, "simulate": cmd_simulate, "compare": cmd_compare, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pwadmpc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"pwadmpc: scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, QpError, LocalSolveError, ComfortError) as exc:
        print(f"pwadmpc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
