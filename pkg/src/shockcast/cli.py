"""Command line: ``shockcast <command> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config, resolve_config, worker_count
from .exceptions import ConfigurationError, FormatError, ShockcastError

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_RUNTIME = 5

COMMANDS = {
    "generate": "simulate the case sweep and write the dataset",
    "train-cfl": "train the step-size models",
    "train-solver": "train the surrogate solvers",
    "rollout": "unroll trained models on the eval cases",
    "evaluate": "write metric reports and the summary",
    "plot": "write PPM panels and the step-size CSV",
    "all": "every stage in order",
}
ORDER = ["generate", "train-cfl", "train-solver", "rollout", "evaluate", "plot"]


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {value}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="shockcast", description="Two-phase learned solver for blast flows.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file overriding the desk defaults")
        p.add_argument("--seed", type=_seed, default=0, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", default="runs", help="workspace root; each stage writes its own subdirectory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command, cfg, seed, out):
    log = logging.getLogger("shockcast").info
    stages = ORDER if command == "all" else [command]
    for stage in stages:
        if stage == "generate":
            pipeline.generate(cfg, pipeline.stage_dir(out, "generate"), worker_count(), log)
        elif stage == "train-cfl":
            pipeline.train_cfl_stage(cfg, out, seed, log)
        elif stage == "train-solver":
            pipeline.train_solver_stage(cfg, out, seed, log)
        elif stage == "rollout":
            pipeline.rollout_stage(cfg, out, seed, log)
        elif stage == "evaluate":
            pipeline.evaluate_stage(cfg, out, seed, log)
        elif stage == "plot":
            pipeline.plot_stage(cfg, out, seed, log)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else resolve_config()
        run(args.command, cfg, args.seed, args.out)
    except ConfigurationError as exc:
        print(f"shockcast: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, FileNotFoundError) as exc:
        print(f"shockcast: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ShockcastError as exc:
        print(f"shockcast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
