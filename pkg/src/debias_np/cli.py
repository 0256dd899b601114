"""
Command-line interface for debias-np.

Subcommands:
- fit: estimate on CSV data with confidence intervals
- predict: estimate on CSV data at given points
- simulate: run a Monte Carlo harness

Exit codes: 0 success, 2 configuration error, 3 data error,
4 estimation failure.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from debias_np import __version__
from debias_np.commands import emit_report, run_command, write_cells_csv
from debias_np.config import (
    CONFIG_KEYS,
    SIMULATION_MODES,
    ConfigError,
    Mode,
    build_config,
    load_config_file,
    merge_overrides,
)
from debias_np.dataset_io import DatasetError
from debias_np.debias import EstimationError
from debias_np.first_stage import RegressorError
from debias_np.inference import InferenceError
from debias_np.simulation import SimulationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# flag dest -> config key
_OVERRIDES = {
    "data": "data",
    "x_col": "x_col",
    "y_col": "y_col",
    "reg": "regressor",
    "bandwidth": "bandwidth",
    "degree": "degree",
    "at": "eval_points",
    "level": "level",
    "seed": "seed",
    "crossfit": "crossfit",
    "out": "out",
    "mode": "mode",
    "sample_sizes": "sample_sizes",
    "replications": "replications",
    "grid_points": "grid_points",
    "f0": "f0",
    "noise": "noise",
    "covariates": "covariates",
    "train_covariates": "train_covariates",
    "test_covariates": "test_covariates",
    "workers": "workers",
}


def _config_key_help() -> str:
    width = max(len(key) for key in CONFIG_KEYS)
    lines = [f"  {key.ljust(width)}  {text}" for key, text in CONFIG_KEYS.items()]
    return "config file keys (flat TOML; flags override file values):\n" + "\n".join(lines)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML experiment file")
    parser.add_argument("--reg", help="first-stage regressor, e.g. knn:5 or nw:0.1")
    parser.add_argument("--bandwidth", help="bandwidth rule, e.g. pointwise:s=2,alpha=1 or fixed:0.2")
    parser.add_argument("--degree", type=int, help="local polynomial degree (default floor(s))")
    parser.add_argument("--at", help="comma-separated evaluation points")
    parser.add_argument("--level", type=float, help="confidence level (default 0.95)")
    parser.add_argument("--seed", type=int, help="split / master seed (default 0)")
    parser.add_argument(
        "--crossfit", action="store_const", const=True, default=None, help="average both fold roles"
    )
    parser.add_argument("--out", help="report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser."""
    modes = ", ".join(mode.value for mode in Mode)
    parser = argparse.ArgumentParser(
        prog="debias-np",
        description=(
            "Debiased nonparametric regression: a first-stage regressor corrected by a "
            f"local polynomial fit of its held-out residuals.\nmodes: {modes}"
        ),
        epilog=_config_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", default="WARNING", choices=LOG_LEVELS, help="log level on stderr"
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="{fit,predict,simulate}")

    for name, text in (
        ("fit", "estimate on CSV data with confidence intervals"),
        ("predict", "estimate on CSV data at the given points"),
    ):
        sub = commands.add_parser(name, help=text, description=text)
        _add_common(sub)
        sub.add_argument("--data", help="CSV file with a header row")
        sub.add_argument("--x-col", help="covariate column (default x)")
        sub.add_argument("--y-col", help="response column (default y)")

    sim = commands.add_parser(
        "simulate",
        help="run a Monte Carlo harness",
        description=f"Run a Monte Carlo harness. modes: {', '.join(SIMULATION_MODES)}",
        epilog=_config_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(sim)
    sim.add_argument("--mode", choices=SIMULATION_MODES, help="harness to run")
    sim.add_argument("--sample-sizes", help="comma-separated increasing sample sizes")
    sim.add_argument("--replications", type=int, help="replications per sample size")
    sim.add_argument("--grid-points", type=int, help="uniform-mode grid size (default 201)")
    sim.add_argument("--f0", help="sine, holder_kink or linear")
    sim.add_argument("--noise", help="gaussian:<sigma>, rademacher:<sigma> or uniform:<halfwidth>")
    sim.add_argument("--covariates", help="uniform01 or beta:<a>,<b>")
    sim.add_argument("--train-covariates", help="shift-mode training covariates")
    sim.add_argument("--test-covariates", help="shift-mode test covariates")
    sim.add_argument("--workers", type=int, help="threads running replications (default 1)")
    sim.add_argument("--cells-csv", help="also write per-cell records as CSV")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {key: getattr(args, dest, None) for dest, key in _OVERRIDES.items()}
    if args.command in (Mode.FIT.value, Mode.PREDICT.value):
        values["mode"] = args.command
    return values


def run(args: argparse.Namespace) -> int:
    """Execute a parsed command line and return the exit code."""
    try:
        values = load_config_file(args.config) if args.config else {}
        config = build_config(merge_overrides(values, _overrides(args)))
        if args.command == "simulate" and not config.mode.is_simulation:
            raise ConfigError(f"'mode' must be one of {', '.join(SIMULATION_MODES)} for simulate")
        report = run_command(config)
        text = emit_report(report, config.out)
        if text is not None:
            sys.stdout.write(text + "\n")
        if getattr(args, "cells_csv", None):
            write_cells_csv(report, args.cells_csv)
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (DatasetError, RegressorError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except (EstimationError, SimulationError, InferenceError) as e:
        logger.error(f"Estimation failed: {e}")
        return EXIT_ESTIMATION
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the debias-np command.

    Sets up logging on stderr and runs the selected subcommand.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    logger.debug(f"debias-np {__version__}: {args.command}")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
