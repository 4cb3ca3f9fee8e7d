"""
DPPMC command-line interface.

Usage:
    python -m src.main run <config.toml> [--out DIR] [--seeds 1,2,3] [--jobs N]
    python -m src.main theory-check [--json] [--seed S] [--trials T]
    python -m src.main plot <records.csv> --out curves.svg [--linear]

Exit codes:
    0 success
    1 config validation error
    2 runtime failure
    3 a theory verification failed (theory-check only)
"""
import argparse
import json
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from src.config.settings import Settings
from src.exceptions import AcceptanceFailure, ConfigValidationError, DppmcException
from src.experiments.config import load_config, parse_seed_list, resolve_seeds
from src.experiments.plotting import render_curves
from src.experiments.runner import run_experiment
from src.models.run_record import read_records_csv
from src.theory.checks import DEFAULT_TRIALS, run_theory_suite
from src.utils.logger import logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dppmc", description="Structured Monte Carlo with determinantal point processes")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run an experiment config")
    run.add_argument("config", help="TOML experiment config")
    run.add_argument("--out", help="Output directory (overrides the config)")
    run.add_argument("--seeds", help="Comma-separated seeds (overrides DPPMC_SEED and the config)")
    run.add_argument("--jobs", type=int, help="Worker threads for independent runs")

    theory = commands.add_parser("theory-check", help="Run the variance-reduction verification suite")
    theory.add_argument("--json", action="store_true", help="Print reports as JSON")
    theory.add_argument("--seed", type=int, help="Root seed (default DPPMC_SEED or 0)")
    theory.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="Sampled DPP draws per variance check")

    plot = commands.add_parser("plot", help="Render median/IQR curves from a records CSV")
    plot.add_argument("records", help="records.csv written by 'run'")
    plot.add_argument("--out", required=True, help="SVG file to write")
    plot.add_argument("--linear", action="store_true", help="Linear objective axis")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    cfg = resolve_seeds(cfg, parse_seed_list(args.seeds) if args.seeds else None)
    result = run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    for name in result.files:
        print(name)
    return EXIT_OK


def cmd_theory_check(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else (Settings().seed or 0)
    reports = run_theory_suite(seed=seed, trials=args.trials)
    if args.json:
        print(json.dumps([report.model_dump() for report in reports], indent=2, sort_keys=True))
    else:
        width = max(len(report.name) for report in reports)
        for report in reports:
            print(f"{report.name:<{width}}  {'PASS' if report.passed else 'FAIL'}  {report.summary()}")
    failed = [report.name for report in reports if not report.passed]
    if failed:
        raise AcceptanceFailure(failed)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    records = read_records_csv(args.records)
    digest = records[0].config_digest if records else None
    path = render_curves(records, args.out, log_y=not args.linear, digest=digest)
    print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "theory-check": cmd_theory_check, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigValidationError, ValidationError) as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    except AcceptanceFailure as e:
        logger.error(str(e))
        return EXIT_ACCEPTANCE
    except DppmcException as e:
        logger.error(str(e))
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected failure: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
