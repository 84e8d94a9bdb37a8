"""Command line front end: ``plots --kind ... --csv ... --out fig.png``."""

from __future__ import annotations

import argparse
import sys

from .data import PlotDataError
from .render import FIGURE_KINDS, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render benchmark figures from stmpi CSV files.")
    parser.add_argument("--kind", choices=FIGURE_KINDS, required=True)
    parser.add_argument("--csv", nargs="+", required=True, metavar="PATH")
    parser.add_argument("--out", required=True, metavar="IMAGE")
    parser.add_argument("--replicates", action="store_true",
                        help="draw 95%% t-interval bands over replicate rows")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(csv_paths=args.csv, kind=args.kind, out_path=args.out,
                    replicates=args.replicates)
    try:
        render(spec)
    except (PlotDataError, OSError) as err:
        print(f"plots: {err}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
