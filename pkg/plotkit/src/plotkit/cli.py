"""Command line: render the convergence figure from a records CSV."""

from __future__ import annotations

import argparse
import sys

from .figures import PANELS, FigureSpec, SchemaError, render_convergence_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render final-error and sample-complexity panels from benchmark records.",
    )
    parser.add_argument("command", choices=["plot"])
    parser.add_argument("--csv", required=True, help="records CSV from a benchmark sweep")
    parser.add_argument("--out", required=True, help="output image (vector format, e.g. .svg)")
    parser.add_argument("--panels", choices=PANELS, default="both")
    parser.add_argument("--slope", type=float, default=-2.0,
                        help="reference power-law slope for the samples panel")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        input_csv=args.csv,
        output_image=args.out,
        panels=args.panels,
        reference_slope=args.slope,
    )
    try:
        out = render_convergence_figure(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
