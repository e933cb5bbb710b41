"""Command line: ``spinecho run | analyze | couplings | version``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from spinecho import __version__
from spinecho.config import ConfigError, load_config
from spinecho.hamiltonian import KIND_STREAMS, generate_couplings
from spinecho.io import ProvenanceError, atomic_write, coupling_text
from spinecho.runner import SweepResult, analyze, run

log = logging.getLogger("spinecho")

EXIT_OK = 0
EXIT_POINT_FAILURE = 1
EXIT_USAGE = 2


def _report(result: SweepResult) -> int:
    for p in result.summary_files:
        print(p)
    if result.n_warnings:
        print(f"warnings: {result.n_warnings} point(s) without a clean decay fit", file=sys.stderr)
    if result.n_failed:
        print(f"failures: {result.n_failed} point(s) failed; see status column", file=sys.stderr)
        return EXIT_POINT_FAILURE
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
    return _report(run(cfg, workers=args.workers))


def cmd_analyze(args) -> int:
    tail = None
    formats = ("csv",)
    inputs = list(args.inputs)
    out = args.out
    if args.config:
        cfg = load_config(args.config)
        formats = cfg.formats
        inputs = inputs or list(cfg.inputs) or [cfg.output_dir]
        out = out or cfg.output_dir
        tail = cfg.tail_fraction if args.tail_fraction is None else args.tail_fraction
    if args.tail_fraction is not None:
        tail = args.tail_fraction
    if not inputs:
        raise ConfigError("analyze: no trace inputs given")
    out = out or (inputs[0] if Path(inputs[0]).is_dir() else ".")
    return _report(analyze(inputs, Path(out), formats, tail))


def cmd_couplings(args) -> int:
    J = generate_couplings(args.n_spins, args.j0, args.seed, args.kind)
    text = coupling_text(J)
    if args.out:
        atomic_write(Path(args.out), text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"spinecho {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinecho", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate every point of a run configuration")
    p.add_argument("--config", required=True, type=Path, help="run configuration file")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seed", type=int, help="override ensemble.base_seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="re-derive summaries from stored traces")
    p.add_argument("inputs", nargs="*", help="trace files or directories")
    p.add_argument("--config", type=Path, help="take inputs, formats and tail fraction from a config")
    p.add_argument("--out", help="directory for the summary files")
    p.add_argument("--tail-fraction", type=float, help="override the stored plateau window")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("couplings", help="write a generated coupling matrix")
    p.add_argument("--n-spins", "-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=sorted(KIND_STREAMS), default="dipolar")
    p.add_argument("--j0", type=float, default=1.0)
    p.add_argument("--out", help="file to write (default stdout)")
    p.set_defaults(func=cmd_couplings)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ProvenanceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
