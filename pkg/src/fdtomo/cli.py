"""Command-line entry point.

Subcommands: synth, invert, iterate, sweep, verify. Every command is a
deterministic function of (config, seed); outputs are byte-identical on
repeated runs. Exit codes: 0 success, 2 configuration error, 3 numerical
precondition violation, 4 divergence.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig, load_config, with_seed
from .errors import DivergenceError, NumericalPreconditionError
from .experiments import (run_invert, run_iterate, run_sweep, run_synth,
                          run_verify)
from .geometry import GeometryError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_DIVERGENCE = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtomo",
        description="Frequency-domain scattering tomography toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sinogram: bool = False):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None,
                       help="output directory (default: config out_dir)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads, 0 = auto")
        if sinogram:
            p.add_argument("sinogram", help="input .hrts sinogram path")

    common(sub.add_parser("synth", help="synthesize boundary data"))
    common(sub.add_parser("invert", help="direct reconstruction of one "
                                         "sinogram"), sinogram=True)
    common(sub.add_parser("iterate", help="fixed-point refinement of one "
                                          "sinogram"), sinogram=True)
    common(sub.add_parser("sweep", help="scaling sweep over omega and b"))
    common(sub.add_parser("verify", help="phase-machinery verification "
                                         "report"))
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValueError("--seed must fit in an unsigned 64-bit integer")
        cfg = with_seed(cfg, args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = args.out if args.out is not None else cfg.out_dir
        threads = args.threads
        if args.command == "synth":
            run_synth(cfg, out, threads=threads)
        elif args.command == "invert":
            run_invert(cfg, args.sinogram, out, threads=threads)
        elif args.command == "iterate":
            run_iterate(cfg, args.sinogram, out, threads=threads)
        elif args.command == "sweep":
            run_sweep(cfg, out, threads=threads)
        elif args.command == "verify":
            _, ok = run_verify(cfg, out)
            if not ok:
                print("verify: bound violations detected, see verify.json",
                      file=sys.stderr)
                return EXIT_PRECONDITION
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except NumericalPreconditionError as err:
        print(f"precondition violation: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ValueError, GeometryError, KeyError, TypeError,
            json.JSONDecodeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
