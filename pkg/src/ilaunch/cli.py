"""Command-line front end.

Subcommands:
  simulate        run a scenario (sweep grids and job workloads alike)
  sweep           run a scenario that must contain a [sweep] grid
  list-builtins   show packaged scenario names
  validate        parse a scenario and print its fully resolved form

Exit codes: 0 success, 1 configuration error (bad scenario, bad flags,
infeasible sweep cells), 2 internal invariant violation. The ILAUNCH_LOG
environment variable sets the log level (e.g. DEBUG, INFO, WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional

from . import metrics, workload
from .runner import run_scenario, run_sweep
from .sched import ReservationError
from .simcore import SimulationError, format_trace_line
from .workload import Scenario, ScenarioError

log = logging.getLogger("ilaunch")


def _scenario_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario TOML file")
    src.add_argument(
        "--builtin", metavar="NAME",
        help="packaged scenario name (see list-builtins)",
    )
    p.add_argument("--seed", type=int, help="override the scenario seed")


def _output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p.add_argument("--trace", metavar="PATH", help="write the event trace here (single runs only)")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--horizon", type=float, metavar="SECONDS", help="stop the run at this sim time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ilaunch",
        description="Discrete-event simulator of cluster scheduling and parallel process launch.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario")
    _scenario_args(p_sim)
    _output_args(p_sim)

    p_sweep = sub.add_parser("sweep", help="run a launch-grid scenario")
    _scenario_args(p_sweep)
    _output_args(p_sweep)

    sub.add_parser("list-builtins", help="list packaged scenarios")

    p_val = sub.add_parser("validate", help="check a scenario and print the resolved config")
    _scenario_args(p_val)
    p_val.add_argument("--out", metavar="PATH")

    return parser


def _load(args) -> Scenario:
    if args.builtin:
        sc = workload.builtin(args.builtin)
    else:
        sc = workload.load_scenario(args.scenario)
    if args.seed is not None:
        if args.seed < 0:
            raise ScenarioError("--seed must be >= 0")
        sc = workload.with_seed(sc, args.seed)
    return sc


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _run_sweep(sc: Scenario, args) -> int:
    if args.trace:
        raise ScenarioError("--trace applies to single runs, not sweeps")
    if args.workers < 1:
        raise ScenarioError("--workers must be >= 1")
    outcome = run_sweep(sc, workers=args.workers)
    text = metrics.sweep_csv(outcome) if args.format == "csv" else metrics.sweep_json(outcome)
    _write(text, args.out)
    if outcome.skipped:
        for nnode, nproc, reason in outcome.skipped:
            print(f"skipped infeasible cell nnode={nnode} nproc={nproc}: {reason}",
                  file=sys.stderr)
        return 1
    return 0


def _run_single(sc: Scenario, args) -> int:
    trace_fh = None
    trace_fn = None
    if args.trace:
        trace_fh = open(args.trace, "w", encoding="utf-8", newline="\n")

        def trace_fn(ev, _fh=trace_fh):
            _fh.write(format_trace_line(ev) + "\n")

    try:
        outcome = run_scenario(sc, horizon_s=args.horizon, trace_fn=trace_fn)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    text = metrics.jobs_csv(outcome) if args.format == "csv" else metrics.run_json(outcome)
    _write(text, args.out)
    return 0


def cmd_simulate(args) -> int:
    sc = _load(args)
    if sc.sweep is not None:
        return _run_sweep(sc, args)
    return _run_single(sc, args)


def cmd_sweep(args) -> int:
    sc = _load(args)
    if sc.sweep is None:
        raise ScenarioError(f"scenario {sc.name!r} has no [sweep] section")
    return _run_sweep(sc, args)


def cmd_list_builtins(_args) -> int:
    for name, desc in workload.BUILTIN_SCENARIOS.items():
        print(f"{name:18} {desc}")
    return 0


def cmd_validate(args) -> int:
    sc = _load(args)
    _write(workload.serialize(sc), args.out)
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "list-builtins": cmd_list_builtins,
    "validate": cmd_validate,
}


def main(argv: Optional[list[str]] = None) -> int:
    level = os.environ.get("ILAUNCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, ReservationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
