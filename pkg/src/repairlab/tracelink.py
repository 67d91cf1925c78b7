"""Wire types and subprocess client for the external line-tracer tool.

The tracer is a standalone executable invoked as::

    tracer <source-file> --input <file> --expected <file> --limits <json>

and prints one JSON document on stdout::

    {
      "schema_version": 1,
      "io": {"input": str, "expected_output": str, "actual_output": str,
             "exit_status": {"kind": "ok" | "exception" | "timeout",
                              "name": str, "message": str}},
      "events": [{"step": int, "line": int, "vars": {name: rendered value}}],
      "truncated": bool
    }

Limits JSON keys: ``wall_seconds`` (float) and ``max_events`` (int). This
schema is the contract between the harness and the tracer and is versioned.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import TestCase

TRACE_SCHEMA_VERSION = 1

EXIT_OK = "ok"
EXIT_EXCEPTION = "exception"
EXIT_TIMEOUT = "timeout"


class TraceFormatError(ValueError):
    """Raised when a trace document does not follow the versioned schema."""


@dataclass(frozen=True)
class Limits:
    """Execution limits applied to one traced or judged run."""

    wall_seconds: float = 5.0
    max_events: int = 10000

    def to_json(self) -> dict:
        return {"wall_seconds": self.wall_seconds, "max_events": self.max_events}


@dataclass(frozen=True)
class ExitStatus:
    kind: str  # "ok" | "exception" | "timeout"
    name: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.kind == EXIT_OK


@dataclass(frozen=True)
class TraceEvent:
    """One executed line: 1-based execution ordinal, 1-based source line, and
    the variables whose rendered value changed at that step."""

    step: int
    line_no: int
    changed_vars: tuple[tuple[str, str], ...] = ()

    @property
    def vars(self) -> dict[str, str]:
        return dict(self.changed_vars)


@dataclass(frozen=True)
class IoCapture:
    input: str
    expected_output: str
    actual_output: str
    exit_status: ExitStatus = field(default_factory=lambda: ExitStatus(EXIT_OK))


@dataclass(frozen=True)
class TraceBundle:
    io: IoCapture
    events: tuple[TraceEvent, ...] = ()
    truncated: bool = False


def bundle_to_json(bundle: TraceBundle) -> dict:
    return {
        "schema_version": TRACE_SCHEMA_VERSION,
        "io": {
            "input": bundle.io.input,
            "expected_output": bundle.io.expected_output,
            "actual_output": bundle.io.actual_output,
            "exit_status": {
                "kind": bundle.io.exit_status.kind,
                "name": bundle.io.exit_status.name,
                "message": bundle.io.exit_status.message,
            },
        },
        "events": [
            {"step": ev.step, "line": ev.line_no, "vars": dict(ev.changed_vars)}
            for ev in bundle.events
        ],
        "truncated": bundle.truncated,
    }


def parse_trace_json(doc: Mapping) -> TraceBundle:
    """Validate and convert a tracer JSON document. Raises TraceFormatError."""
    try:
        version = doc["schema_version"]
        if version != TRACE_SCHEMA_VERSION:
            raise TraceFormatError(f"unsupported trace schema version {version!r}")
        io = doc["io"]
        status = io["exit_status"]
        if status["kind"] not in (EXIT_OK, EXIT_EXCEPTION, EXIT_TIMEOUT):
            raise TraceFormatError(f"unknown exit status kind {status['kind']!r}")
        events = []
        for ev in doc["events"]:
            events.append(
                TraceEvent(
                    step=int(ev["step"]),
                    line_no=int(ev["line"]),
                    changed_vars=tuple((str(k), str(v)) for k, v in ev["vars"].items()),
                )
            )
        return TraceBundle(
            io=IoCapture(
                input=io["input"],
                expected_output=io["expected_output"],
                actual_output=io["actual_output"],
                exit_status=ExitStatus(
                    kind=status["kind"],
                    name=status.get("name", ""),
                    message=status.get("message", ""),
                ),
            ),
            events=tuple(events),
            truncated=bool(doc["truncated"]),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise TraceFormatError(f"malformed trace document: {exc}") from exc


class TracerUnavailable(RuntimeError):
    """Raised when the tracer executable cannot be found or fails outright."""


class TracerClient:
    """Runs the external tracer on one program + test and parses its output."""

    def __init__(self, command: Sequence[str] = ("tracer",)):
        self.command = tuple(command)

    def available(self) -> bool:
        return shutil.which(self.command[0]) is not None

    def trace_run(self, source: str, test: TestCase, limits: Limits = Limits()) -> TraceBundle:
        with tempfile.TemporaryDirectory(prefix="tracelink-") as scratch:
            scratch_path = Path(scratch)
            src = scratch_path / "prog.py"
            src.write_text(source, encoding="utf-8")
            inp = scratch_path / "stdin.txt"
            inp.write_text(test.input, encoding="utf-8")
            expected = scratch_path / "expected.txt"
            expected.write_text(test.expected_output, encoding="utf-8")
            cmd = list(self.command) + [
                str(src),
                "--input",
                str(inp),
                "--expected",
                str(expected),
                "--limits",
                json.dumps(limits.to_json()),
            ]
            try:
                proc = subprocess.run(
                    cmd,
                    capture_output=True,
                    text=True,
                    timeout=limits.wall_seconds + 10.0,
                )
            except FileNotFoundError as exc:
                raise TracerUnavailable(f"tracer command not found: {self.command[0]}") from exc
            except subprocess.TimeoutExpired as exc:
                raise TracerUnavailable("tracer did not finish within its grace period") from exc
        if proc.returncode != 0:
            raise TracerUnavailable(f"tracer exited with {proc.returncode}: {proc.stderr.strip()}")
        try:
            return parse_trace_json(json.loads(proc.stdout))
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"tracer wrote invalid JSON: {exc}") from exc
