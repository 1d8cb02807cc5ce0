"""``llg <experiment> --config <path> [--strategy] [--k] [--out] [--threads]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .linsolve import ConvergenceError
from .mesh import MeshError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="llg", description="Finite element LLG experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value file; flags below override it")
    p.add_argument("--strategy", choices=("mp", "ab", "ee"))
    p.add_argument("--k", type=float, help="time-step (nondimensional)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="BLAS thread limit")
    return p


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def main(argv=None):
    parser = build_parser()
    parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"llg: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiments import RUNNERS

    overrides = {"strategy": args.strategy, "k": args.k, "out": args.out, "threads": args.threads}
    try:
        cfg = load_config(args.experiment, args.config, overrides)
        threads = cfg.int("threads", 1)
    except ConfigError as exc:
        print(f"llg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=threads):
            summary = RUNNERS[args.experiment](cfg)
    except (ConfigError, MeshError, OSError) as exc:
        print(f"llg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"llg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    for key, val in summary.items():
        if isinstance(val, (str, int, float)):
            print(f"{key} = {val}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
