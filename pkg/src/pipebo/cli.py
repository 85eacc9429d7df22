"""Command-line entry points: run a matrix, summarize it, compare update variants.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .benchmarks import FUNCTION_NAMES
from .harness import (
    ConfigError,
    compare_update,
    load_config,
    render_compare,
    render_summary,
    run_matrix,
    summarize,
    write_compare_csv,
    write_summary_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipebo",
        description="Pipelined Bayesian optimization benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run matrix from a JSON config")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="base seed (overrides config)")
    p_run.add_argument("--runs", type=int, help="runs per cell (overrides config)")
    p_run.add_argument("--budget", type=int, help="steps per run (overrides config)")
    p_run.add_argument("--workers", type=int, help="worker processes (overrides config)")

    p_sum = sub.add_parser(
        "summarize", help="steps-to-reach table against the sequential baseline"
    )
    p_sum.add_argument("--traces", required=True, help="trace CSV or its directory")
    p_sum.add_argument("--reference-step", type=int, default=100)
    p_sum.add_argument("--out", help="also write the table as CSV here")

    p_cmp = sub.add_parser(
        "compare-update", help="superiority ratios of updates vs frozen parameters"
    )
    p_cmp.add_argument("--traces", required=True, help="trace CSV or its directory")
    p_cmp.add_argument("--out", help="also write the ratios as CSV here")

    p_bench = sub.add_parser("bench", help="benchmark function info")
    p_bench.add_argument("action", choices=["list"])
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            overrides = {}
            if args.out is not None:
                overrides["out_dir"] = args.out
            if args.seed is not None:
                overrides["base_seed"] = args.seed
            if args.runs is not None:
                overrides["runs"] = args.runs
            if args.budget is not None:
                overrides["budget_steps"] = args.budget
            if args.workers is not None:
                overrides["workers"] = args.workers
            config = load_config(args.config, overrides)
            csv_path, manifest_path = run_matrix(config)
            print(f"traces: {csv_path}")
            print(f"manifest: {manifest_path}")
        elif args.command == "summarize":
            rows, averages = summarize(args.traces, args.reference_step)
            print(render_summary(rows, averages))
            if args.out:
                path = write_summary_csv(rows, averages, args.out)
                print(f"summary csv: {path}")
        elif args.command == "compare-update":
            records = compare_update(args.traces)
            print(render_compare(records))
            if args.out:
                path = write_compare_csv(records, args.out)
                print(f"ratios csv: {path}")
        elif args.command == "bench":
            for fid, name in FUNCTION_NAMES.items():
                print(f"{fid}\t{name}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure path, keep the cause visible
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
