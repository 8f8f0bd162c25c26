"""Command-line entry point.

Usage::

    python -m src.main.cli run <config> [--seed N] [--out DIR] [--no-plots] [--workers K] [--log-level LEVEL]
    python -m src.main.cli check <config>
    python -m src.main.cli diagnose <config> [--seed N] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 simulation error (resample
cap, quadrature, I/O), 3 a condition flag was raised.
"""
import argparse
import json
import logging
import os
import sys

from .commons import ConfigError, QuadratureError, ResampleCapError
from .experiment_config import load_config
from .experiment_runner import (EXIT_CONFIG_ERROR, EXIT_OK, EXIT_SIMULATION_ERROR, run_diagnostics,
                                run_experiment)

LOG_FILE = "run.log"
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="es-lincon",
                                     description="Simulate a (1,lambda)-ES on a linear function with a linear "
                                                 "constraint handled by resampling.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run the chain experiment and write its artifacts")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory (overrides the config and the environment)")
    run.add_argument("--no-plots", action="store_true")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--log-level", default="DEBUG")

    check = subparsers.add_parser("check", help="validate a configuration")
    check.add_argument("config")

    diagnose = subparsers.add_parser("diagnose", help="compute the conditions table only")
    diagnose.add_argument("config")
    diagnose.add_argument("--seed", type=int, default=None)
    diagnose.add_argument("--out", default=None)
    diagnose.add_argument("--log-level", default="DEBUG")
    return parser


def setup_logging(output_dir: str, level: str) -> None:
    """Logs to `run.log` in the output directory, overwritten on every invocation."""
    os.makedirs(output_dir, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.DEBUG),
        format=LOG_FORMAT,
        filename=os.path.join(output_dir, LOG_FILE),
        filemode='w',
        encoding='utf-8',
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    """Parses the command line, runs the command and returns the exit code."""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.command == "check":
        print(json.dumps(config.model_dump(mode='json'), indent=4, ensure_ascii=False))
        return EXIT_OK

    output_dir = args.out or config.output.directory
    setup_logging(output_dir, args.log_level)
    logger = logging.getLogger(__name__)
    logger.info(f"Command '{args.command}' with configuration {args.config}")
    try:
        if args.command == "run":
            result = run_experiment(config, seed=args.seed, out_dir=output_dir,
                                    plots=False if args.no_plots else None, workers=args.workers)
            rate = result.report.divergence_rate
            print(f"divergence rate {rate.estimate:.6g} [{rate.lower:.6g}, {rate.upper:.6g}]")
        else:
            result = run_diagnostics(config, seed=args.seed, out_dir=output_dir)
            for row in result.diagnostics.rows:
                print(f"delta={row.delta:<8g} E|g(M~)|={row.mean_abs_g_feasible:<12.6g} "
                      f"E[g(M*)]={row.mean_g_selected:<12.6g} E[M*_2]={row.mean_mstar_2:.6g}")
            print(f"exp moment divergent: {result.diagnostics.exp_moment.divergent}")
    except (ResampleCapError, QuadratureError) as e:
        logger.error(f"Simulation failed: {e}", exc_info=True)
        print(f"Simulation error: {e}", file=sys.stderr)
        return EXIT_SIMULATION_ERROR
    except OSError as e:
        logger.error(f"I/O failure: {e}", exc_info=True)
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_SIMULATION_ERROR
    for flag in result.flags:
        print(f"condition flag raised: {flag}", file=sys.stderr)
    logger.info(f"Finished with exit status {result.exit_status}; artifacts: {result.artifacts}")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
