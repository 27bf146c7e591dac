"""Command-line entry point.

``unified-wf [sweep flags]`` runs a Monte Carlo sweep and writes CSV/SVG
artifacts. ``unified-wf solve SCENARIO.json`` runs the unified solver on a
saved scenario. ``unified-wf scenario OUT.json`` writes a template scenario.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import UnifiedWFError
from .scenario import Scenario
from .solver import SolverConfig, solve
from .sweep import (ALGORITHMS, PLOT_METRICS, ScenarioTemplate, SweepConfig, emit_csv, emit_plot,
                    emit_summary_csv, run_sweep, trial_seed)

log = logging.getLogger("unified_wf")

EXIT_USAGE = 2
EXIT_SOLVE = 3


def parse_grid(text: str) -> list:
    """``"0:2:20"`` (inclusive range) or ``"1,3,5"`` to a list of floats."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError(f"range must be start:step:stop, got {text!r}")
        start, step, stop = parts
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        n = int(round((stop - start) / step))
        values = [start + i * step for i in range(n + 1)]
        if abs(values[-1] - stop) > 1e-9 * max(1.0, abs(stop)):
            raise ValueError(f"range {text!r} does not land on its stop value")
        return [round(v, 12) for v in values]
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError("empty grid")
    return values


def _names(text: str, allowed, what: str) -> list:
    names = [n.strip() for n in text.split(",") if n.strip()]
    bad = [n for n in names if n not in allowed]
    if bad or not names:
        raise ValueError(f"unknown {what}: {bad or text!r}; choose from {', '.join(allowed)}")
    return names


def _sweep_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unified-wf", description="Run a Monte Carlo power-allocation sweep.")
    p.add_argument("--config", type=Path, help="JSON sweep configuration; flags override it")
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--algorithms", help="comma list from " + ",".join(ALGORITHMS))
    p.add_argument("--snr-db", help="grid such as 0:2:20 or 0,10,20")
    p.add_argument("--p-total", help="budgets in watts, e.g. 1,3,5")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for trials")
    p.add_argument("--plot", help="comma list from " + ",".join(PLOT_METRICS))
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_time_s as nan so outputs are byte-reproducible")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_config(args) -> SweepConfig:
    base = SweepConfig.load(args.config) if args.config else SweepConfig()
    overrides = {}
    if args.algorithms:
        overrides["algorithms"] = tuple(_names(args.algorithms, ALGORITHMS, "algorithms"))
    if args.snr_db:
        overrides["snr_db_grid"] = tuple(parse_grid(args.snr_db))
    if args.p_total:
        overrides["p_total_grid"] = tuple(parse_grid(args.p_total))
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.no_timing:
        overrides["timing"] = False
    return dataclasses.replace(base, **overrides)


def run_sweep_command(argv) -> int:
    parser = _sweep_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        plots = _names(args.plot, PLOT_METRICS, "plot metrics") if args.plot else []
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"unified-wf: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    log.info("sweep: %d trials x %d SNR x %d budgets x %s", cfg.trials, len(cfg.snr_db_grid),
             len(cfg.p_total_grid), ",".join(cfg.algorithms))
    result = run_sweep(cfg)
    failed = sum(r.failed for r in result.rows)
    if failed:
        log.warning("%d rows flagged infeasible (iterations=-1)", failed)
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        emit_csv(result, args.out_dir / "sweep.csv")
        emit_summary_csv(result, args.out_dir / "summary.csv")
        (args.out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
        for metric in plots:
            emit_plot(result, metric, args.out_dir / f"{metric}.svg")
    except OSError as exc:
        print(f"unified-wf: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(result.rows)} rows to {args.out_dir / 'sweep.csv'}")
    return 0


def run_solve_command(argv) -> int:
    p = argparse.ArgumentParser(prog="unified-wf solve", description="Solve one saved scenario.")
    p.add_argument("scenario", type=Path)
    p.add_argument("--solver-config", type=Path, help="JSON solver settings")
    p.add_argument("--report", type=Path, help="write the solve report as JSON")
    p.add_argument("--trace", type=Path, help="write the per-iteration trace as CSV")
    args = p.parse_args(argv)
    try:
        scenario = Scenario.load(args.scenario)
        cfg = (SolverConfig.from_dict(json.loads(args.solver_config.read_text()))
               if args.solver_config else SolverConfig())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"unified-wf: cannot load inputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = solve(scenario, cfg)
    except UnifiedWFError as exc:
        print(f"unified-wf: solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    try:
        if args.report:
            report.save(args.report)
        if args.trace:
            report.write_trace_csv(args.trace)
    except OSError as exc:
        print(f"unified-wf: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status = "converged" if report.converged else "not converged"
    print(f"{status} after {report.iterations} iterations; "
          f"total power {report.allocation.total_power:.6g} W, KKT residual {report.kkt_residual:.3g}")
    return 0


def run_scenario_command(argv) -> int:
    p = argparse.ArgumentParser(prog="unified-wf scenario",
                                description="Write the default template scenario for one trial.")
    p.add_argument("out", type=Path)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--p-total", type=float, default=5.0)
    args = p.parse_args(argv)
    template = ScenarioTemplate()
    try:
        base = template.build(trial_seed(args.seed, args.trial))
        template.at(base, args.snr_db, args.p_total).save(args.out)
    except (OSError, ValueError) as exc:
        print(f"unified-wf: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


COMMANDS = {"solve": run_solve_command, "scenario": run_scenario_command}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in COMMANDS:
        return COMMANDS[argv[0]](argv[1:])
    if argv and argv[0] == "sweep":
        argv = argv[1:]
    return run_sweep_command(argv)
