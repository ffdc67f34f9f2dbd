#!/usr/bin/env python
"""
Active Steering - command line entry points.

    steering run --config active_steering/config/n1_single_trajectory.json
    steering sweep --preset smoke --noise phase --workers 4
    steering ensemble --config active_steering/config/n1_bloch_weak.json
    steering verify
    steering locate-threshold results/sweep.csv --method onset
"""

import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from active_steering import __version__
from active_steering.harness.models import load_run_config
from active_steering.harness.output import read_sweep_csv
from steering_core.core_config import LOGGING_CONFIG

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_VERIFY_FAILED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steering", description="Active steering of weakly measured qubits")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=LOGGING_CONFIG["log_level"],
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "Single trajectory"), ("ensemble", "Trajectory-averaged state history"),
                            ("sweep", "Error-rate sweep"), ("verify", "Property suites")):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", help="JSON config file")
        command.add_argument("--seed", type=int, help="Master seed (u64)")
        command.add_argument("--workers", type=int, help="Worker processes")
        command.add_argument("--out", help="Output directory")
        command.add_argument("--preset", choices=["paper", "smoke"], help="Ensemble preset")
        command.add_argument("--noise", choices=["both", "phase", "amplitude"], help="Swept noise channels")
        if name in ("run", "ensemble"):
            command.add_argument("--gamma", type=float, help="Error rate applied via the noise mode")

    locate = commands.add_parser("locate-threshold", help="Re-analyse an existing sweep CSV")
    locate.add_argument("path", help="Sweep CSV")
    locate.add_argument("--method", choices=["minimum", "onset"], default="minimum", help="Threshold locator")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "master_seed": args.seed,
        "workers": args.workers,
        "output_dir": args.out,
        "preset": args.preset,
        "noise": args.noise,
        "gamma": getattr(args, "gamma", None),
    }


def _run(args: argparse.Namespace) -> int:
    from active_steering.harness.trajectory_service import trajectory_service

    config = load_run_config(args.config, _overrides(args))
    result = trajectory_service.run_single(config)
    print(result.summary.model_dump_json(indent=2))
    return EXIT_OK


def _ensemble(args: argparse.Namespace) -> int:
    from active_steering.harness.ensemble_service import ensemble_service

    config = load_run_config(args.config, _overrides(args))
    result = asyncio.run(ensemble_service.run_ensemble(config))
    print(result.summary.model_dump_json(indent=2))
    return EXIT_RUNTIME if result.summary.n_failed else EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    from active_steering.sweep_flow import SweepFlow

    config = load_run_config(args.config, _overrides(args))
    state = asyncio.run(SweepFlow(config).kickoff())
    gamma_c = "not located" if state.gamma_c is None else f"{state.gamma_c:.6g}"
    print(f"gamma_c: {gamma_c}")
    if state.threshold_note:
        print(f"note: {state.threshold_note}")
    if state.max_z_score is not None:
        print(f"scaling collapse max z-score: {state.max_z_score:.3g}")
    return EXIT_RUNTIME if state.partial else EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    from active_steering.harness.verify_service import verify_service

    config = load_run_config(args.config, _overrides(args))
    report = asyncio.run(verify_service.run(config))
    print(report.format())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _locate(args: argparse.Namespace) -> int:
    from active_steering.sweep_flow import reanalyse

    points, hash_value = read_sweep_csv(args.path)
    gamma_c = reanalyse(points, args.method)
    print(f"gamma_c: {gamma_c:.6g} ({args.method}, config_hash={hash_value})")
    return EXIT_OK


COMMANDS = {"run": _run, "ensemble": _ensemble, "sweep": _sweep, "verify": _verify, "locate-threshold": _locate}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch a command and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format=LOGGING_CONFIG["format"],
        handlers=[logging.StreamHandler(sys.stdout)],
    )
    try:
        return COMMANDS[args.command](args)
    except ValueError as e:
        logger.error(f"❌ Invalid input: {e}")
        return EXIT_INVALID
    except (RuntimeError, OSError) as e:
        logger.exception(f"❌ Run failed: {e}")
        return EXIT_RUNTIME


def run_verify() -> int:
    """Console entry point for the property suites."""
    return main(["verify", *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(main())
