"""Command-line entry point.

    cellstates extract --model toy-4block --counts DIR/counts.mtx \
        --pooling mean --batch 64 --out DIR

Exit codes: 0 success, 1 bad input/checkpoint/configuration, 2 extraction
failure or I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .containerio import read_counts_mtx, verify_container_dir
from .errors import CellstatesError, ExtractionError
from .extract import ExtractionConfig, extract_layers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellstates",
        description="Extract per-block hidden states into a layer-embedding container.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="run a frozen checkpoint over counts")
    ex.add_argument("--model", required=True, help="bundled alias or checkpoint directory")
    ex.add_argument("--counts", required=True, help="counts.mtx with id sidecars")
    ex.add_argument("--pooling", default="mean", help="mean or cell-token:N")
    ex.add_argument("--batch", type=int, default=64, help="cells per batch")
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--out", required=True, help="container directory to write")
    return parser


def _run_extract(args: argparse.Namespace) -> int:
    cfg = ExtractionConfig(
        model=args.model,
        out=args.out,
        pooling=args.pooling,
        batch_size=args.batch,
        device=args.device,
    )
    counts = read_counts_mtx(args.counts)
    out = extract_layers(cfg, counts)
    problems = verify_container_dir(out)
    if problems:
        raise ExtractionError(
            "written container failed self-check: " + "; ".join(problems)
        )
    print(f"wrote {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            return _run_extract(args)
        parser.error(f"unknown command {args.command!r}")
    except CellstatesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
