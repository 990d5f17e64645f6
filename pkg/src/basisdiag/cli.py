"""Command line entry point ``diagnose``."""

from __future__ import annotations

import argparse
import sys

from threadpoolctl import threadpool_limits

from .errors import DiagnosticError, EmitError, ModelBuildError
from .harness import emit, load_scenario, run_pipeline, thread_cap

EXIT_OK = 0
EXIT_MODEL = 2
EXIT_IO = 3


def build_parser():
    p = argparse.ArgumentParser(
        prog="diagnose",
        description="Run the basis diagnostics battery on a scenario and write the report.",
    )
    p.add_argument("--scenario", required=True, help="scenario JSON path or builtin:NAME (S1..S4)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid-n", type=int, help="override the grid size n")
    p.add_argument("--window", type=float, help="override the real-line window R")
    p.add_argument("--format", choices=("json", "csv", "both"), default="json")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--strip-c", type=float, help="override the strip half-width c")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except EmitError as exc:
        print(f"diagnose: {exc}", file=sys.stderr)
        return EXIT_IO
    except DiagnosticError as exc:
        print(f"diagnose: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_MODEL
    try:
        scenario = scenario.with_overrides(args.grid_n, args.window, args.seed, args.strip_c)
        with threadpool_limits(limits=thread_cap()):
            report = run_pipeline(scenario)
    except DiagnosticError as exc:
        if not isinstance(exc, ModelBuildError):
            exc = ModelBuildError(str(exc))
        print(f"diagnose: {exc}", file=sys.stderr)
        return EXIT_MODEL
    formats = {"json": ["json"], "csv": ["csv_bundle"], "both": ["json", "csv_bundle"]}[args.format]
    try:
        for fmt in formats:
            emit(report, fmt, args.out)
    except EmitError as exc:
        print(f"diagnose: {exc}", file=sys.stderr)
        return EXIT_IO
    counts = {}
    for verdict in report.verdicts.values():
        counts[verdict] = counts.get(verdict, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(f"{scenario.name}: {len(report.checks)} checks ({summary}) -> {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
