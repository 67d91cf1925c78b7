"""Command-line entry point: trace one program and print the JSON document.

Usage::

    tracer <source-file> --input <file> --expected <file> --limits '{"wall_seconds": 5, "max_events": 10000}'

The JSON document on stdout follows the versioned schema in
:mod:`tracekit.schema`. The exit code reflects tracer-level failures only;
a crashing or timed-out traced program still yields exit code 0 with the
failure recorded in ``io.exit_status``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .runner import Limits, trace_run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracer", description=__doc__)
    parser.add_argument("source", help="path of the Python program to trace")
    parser.add_argument("--input", required=True, help="file holding the test input")
    parser.add_argument("--expected", required=True, help="file holding the expected output")
    parser.add_argument(
        "--limits",
        default="{}",
        help='limits as inline JSON, e.g. {"wall_seconds": 5, "max_events": 10000}',
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        source = Path(args.source).read_text(encoding="utf-8")
        input_text = Path(args.input).read_text(encoding="utf-8")
        expected = Path(args.expected).read_text(encoding="utf-8")
        limits = Limits.from_json(json.loads(args.limits))
    except (OSError, ValueError) as exc:
        print(f"tracer: {exc}", file=sys.stderr)
        return 2
    result = trace_run(source, input_text, expected, limits)
    json.dump(result.to_json(), sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
