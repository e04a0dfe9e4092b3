# -*- coding: utf-8 -*-
"""
Command-line interface.

Exit codes: 0 on success, 1 when an oracle check fails or results cannot be
recorded, 2 on a scenario error, 3 when every row of a scenario is
infeasible and 4 on an internal numerical error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from eventsourcing.persistence import PersistenceError

from isac_mimo.application import Experiments
from isac_mimo.exceptions import (
    DegenerateChannelError,
    DomainError,
    EstimationImpossibleError,
    ScenarioError,
    SolverError,
)
from isac_mimo.experiments import emit, run_convergence, run_scenario
from isac_mimo.oracles import SUITES, run_suite
from isac_mimo.scenarios import Scenario, ScenarioKind, keys_help, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SCENARIO = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac-mimo",
        description=(
            "Rate and sensing-bound analysis and power allocation for massive-MIMO "
            "integrated sensing and communications."
        ),
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress (-v) or solver details (-vv)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run",
        help="run a scenario and write its rows",
        epilog="scenario keys:\n  " + "\n  ".join(keys_help()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    run.add_argument("config", type=Path, help="scenario file")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--out-dir", type=Path, default=Path("."), help="output folder")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument(
        "--threads", type=int, default=1, help="worker threads for sweep points"
    )
    run.add_argument(
        "--record",
        action="store_true",
        help="also record the run and project its rows into the Django database "
        "(needs DJANGO_SETTINGS_MODULE)",
    )

    validate = commands.add_parser("validate", help="check a scenario file")
    validate.add_argument("config", type=Path, help="scenario file")

    oracle = commands.add_parser("oracle", help="run cross-check suites")
    oracle.add_argument("suite", choices=("all",) + tuple(SUITES))
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument(
        "--quick", action="store_true", help="fewer cases and Monte-Carlo draws"
    )
    return parser


def _configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _load(path: Path, seed: Optional[int]) -> Scenario:
    scenario = load_scenario(path)
    if seed is not None:
        scenario = replace(scenario, system=replace(scenario.system, seed=seed))
    return scenario


def _experiments_app() -> Experiments:
    if not os.environ.get("DJANGO_SETTINGS_MODULE"):
        raise ScenarioError("--record needs DJANGO_SETTINGS_MODULE to be set")
    import django

    django.setup()
    return Experiments()


def _output(args: argparse.Namespace, scenario: Scenario, suffix: str = "") -> Path:
    return args.out_dir / f"{scenario.id}{suffix}.{args.format}"


def _run(args: argparse.Namespace) -> int:
    scenario = _load(args.config, args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    if scenario.kind is ScenarioKind.CONVERGENCE:
        rows = run_convergence(scenario)
        path = emit(rows, _output(args, scenario, "-convergence"), args.format)
        print(f"{scenario.id}: {len(rows)} iteration rows written to {path}")
        return EXIT_OK

    app = _experiments_app() if args.record else None
    result = run_scenario(scenario, workers=args.threads, app=app)
    paths = [emit(result.rows, _output(args, scenario), args.format)]
    if result.aggregates:
        paths.append(
            emit(result.aggregates, _output(args, scenario, "-aggregate"), args.format)
        )
    summary = result.summary()
    print(
        f"{scenario.id}: {summary['rows']} rows, "
        f"{summary['infeasible_rows']} infeasible, written to "
        + ", ".join(str(p) for p in paths)
    )
    if app is not None and result.run_id is not None:
        from isac_mimo.projection import ResultsProjection

        written = ResultsProjection.from_env().project(app, result.run_id)
        print(f"recorded run {result.run_id} ({written} rows projected)")
    if result.all_infeasible:
        logger.error("every row of %s is infeasible", scenario.id)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.config)
    points = len(scenario.sweep_values)
    units = points * scenario.large_scale_sets
    print(
        f"{args.config}: ok ({scenario.kind.value} over {scenario.sweep_axis.value}, "
        f"{points} points, {units} units)"
    )
    return EXIT_OK


def _oracle(args: argparse.Namespace) -> int:
    checks = run_suite(args.suite, seed=args.seed, quick=args.quick)
    for check in checks:
        print(check)
    failed = [check for check in checks if not check.passed]
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed")
        return EXIT_FAILED
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


COMMANDS = {"run": _run, "validate": _validate, "oracle": _oracle}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except (SolverError, DegenerateChannelError, EstimationImpossibleError) as e:
        logger.exception("numerical failure")
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, PersistenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
