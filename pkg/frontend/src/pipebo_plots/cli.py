"""Command line for batch figure rendering.

Exit codes: 0 success, 2 bad input (schema mismatch, empty filter), 3 other
failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import FilterError, SchemaError, load_trace_csv
from .render import PLOT_KINDS, PlotSpec, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description="Trace CSV figure rendering")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from a trace CSV")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--in", dest="input_csv", required=True, help="trace CSV path")
    p.add_argument("--out", dest="output_image", required=True, help="SVG or PNG path")
    p.add_argument("--function", help="restrict to one function id")
    p.add_argument("--preset", help="restrict to one preset tag")
    p.add_argument("--log", action="store_true", help="log-scale regret axis")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        table = load_trace_csv(args.input_csv)
        spec = PlotSpec(
            input_csv=Path(args.input_csv),
            output_image=Path(args.output_image),
            kind=args.kind,
            function=args.function,
            preset=args.preset,
            log_scale=args.log,
        )
        result = render(table, spec)
    except (SchemaError, FilterError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {result.output_image}")
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
