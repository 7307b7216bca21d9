"""Command-line entry point: one figure id plus its input paths.

    figplots FIGURE_ID INPUT.csv [INPUT2.csv ...] --out DIR
             [--name BASENAME] [--xscale linear|log] [--yscale linear|log]
             [--levels I J]

Exit codes: 0 on success, 1 on any input problem (missing file, empty
CSV, schema mismatch, unknown figure id).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURES, FigureSpec, render
from .io import InputDataError, InputModifiedError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figplots",
        description="Render simulation CSV/JSON outputs as PNG + SVG figures.",
    )
    parser.add_argument(
        "figure_id",
        help="which figure to render: " + ", ".join(sorted(FIGURES)),
    )
    parser.add_argument("inputs", nargs="+", help="CSV/JSON input files")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--name", default=None, help="output basename (default: figure id)")
    parser.add_argument("--xscale", choices=("linear", "log"), default=None)
    parser.add_argument("--yscale", choices=("linear", "log"), default=None)
    parser.add_argument(
        "--levels", type=int, nargs=2, default=(2, 7), metavar=("I", "J"),
        help="level pair for gap figures (default 2 7)",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(
        figure_id=args.figure_id,
        inputs=[Path(p) for p in args.inputs],
        out_dir=Path(args.out),
        name=args.name,
        xscale=args.xscale,
        yscale=args.yscale,
        levels=tuple(args.levels),
    )
    try:
        written = render(spec)
    except (InputDataError, InputModifiedError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
