"""
Command-line entry point.

    aniso-decay run       [--config PATH | --preset NAME] [--out DIR] [--eta X] [--linear-only]
    aniso-decay linear    same flags, nonlinearity switched off
    aniso-decay analyze   --out DIR      re-run diagnostics on stored snapshots
    aniso-decay report    --out DIR      print a stored report
    aniso-decay selfcheck [--suite NAME ...]

The exit code is 0 only when every check in the report passed.
"""
import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from aniso_decay.config import CONFIG_PRESETS, ExperimentConfig, load_config, preset_config
from aniso_decay.errors import AnisoDecayError
from aniso_decay.experiments import analyze, run_experiment
from aniso_decay.grid_spectral import THREADS_ENV, set_fft_workers
from aniso_decay.selfcheck import SUITES, run_selfcheck

logger = logging.getLogger("aniso_decay")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aniso-decay",
        description="Pseudospectral simulation and decay-rate verification for "
                    "Navier-Stokes with horizontal viscosity.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"FFT worker threads (default: ${THREADS_ENV} or 1)")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "solve and analyze an experiment"),
                            ("linear", "run with the nonlinearity switched off")):
        p = sub.add_parser(name, help=help_text)
        source = p.add_mutually_exclusive_group()
        source.add_argument("--config", type=Path, help="TOML experiment config")
        source.add_argument("--preset", choices=CONFIG_PRESETS,
                            help="named experiment (default: thm1-decay, linear-decay for 'linear')")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--eta", type=float, help="initial-data amplitude")
        p.add_argument("--linear-only", action="store_true", help="drop the nonlinearity")
        p.add_argument("--no-progress", action="store_true", help="hide progress bars")

    p = sub.add_parser("analyze", help="re-run diagnostics on a stored experiment")
    p.add_argument("--out", type=Path, required=True, help="experiment directory")

    p = sub.add_parser("report", help="print the report of a stored experiment")
    p.add_argument("--out", type=Path, required=True, help="experiment directory")

    p = sub.add_parser("selfcheck", help="multiplier identities and oracle suite")
    p.add_argument("--suite", action="append", choices=sorted(SUITES),
                   help="run only this suite (repeatable)")
    p.add_argument("--out", type=Path, help="also write the report here")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    linear = args.command == "linear" or args.linear_only
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = preset_config(args.preset or ("linear-decay" if args.command == "linear" else "thm1-decay"))
    overrides = {
        "data.eta": args.eta,
        "solver.linear_only": True if linear else None,
        "output.directory": str(args.out) if args.out else None,
        "output.progress": False if args.no_progress else None,
    }
    if linear:
        overrides["diagnostics.refine_check"] = False
    return config.with_overrides(**overrides)


def print_stored_report(directory: Path) -> int:
    text = (directory / "report.txt").read_text()
    print(text, end="")
    checks = pd.read_csv(directory / "checks.csv")
    return 0 if bool(checks["passed"].all()) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        if args.threads is not None:
            set_fft_workers(args.threads)
        if args.command in ("run", "linear"):
            report = run_experiment(resolve_config(args))
        elif args.command == "analyze":
            report = analyze(args.out)
        elif args.command == "report":
            return print_stored_report(args.out)
        else:
            report = run_selfcheck(args.suite, progress=sys.stderr.isatty())
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                report.write(args.out)
    except (AnisoDecayError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    print(report.to_text(), end="")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
