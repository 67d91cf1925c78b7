"""Test-suite execution in isolated subprocesses and the repair metrics.

Programs are judged competitive-programming style: stdin from the test input,
stdout compared against the expected output ignoring per-line trailing
whitespace and the final trailing newline, everything else exact. Each test
runs in a fresh process with an empty scratch working directory.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import TestCase
from .tracelink import EXIT_OK, Limits, TraceBundle

PASS = "pass"
FAIL = "fail"
TIMEOUT = "timeout"
CRASH = "crash"


def normalize_output(text: str) -> str:
    """Comparison form of program output: CRLF folded, per-line trailing
    whitespace removed, trailing blank lines dropped."""
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def outputs_match(actual: str, expected: str) -> bool:
    return normalize_output(actual) == normalize_output(expected)


@dataclass(frozen=True)
class VerdictSet:
    """Per-test outcomes of one program against one suite."""

    verdicts: tuple[tuple[str, str], ...]  # (test_id, verdict), sorted by id

    @classmethod
    def from_mapping(cls, verdicts: Mapping[str, str]) -> "VerdictSet":
        return cls(tuple(sorted(verdicts.items())))

    @property
    def passed(self) -> frozenset[str]:
        return frozenset(tid for tid, v in self.verdicts if v == PASS)

    @property
    def failed(self) -> frozenset[str]:
        """Everything that is not a pass: wrong answer, timeout, or crash."""
        return frozenset(tid for tid, v in self.verdicts if v != PASS)

    def all_pass(self) -> bool:
        return bool(self.verdicts) and not self.failed

    def as_dict(self) -> dict[str, str]:
        return dict(self.verdicts)


@dataclass(frozen=True)
class RepairOutcome:
    """Before/after verdicts of one repair attempt."""

    before: VerdictSet
    after: VerdictSet

    @property
    def m(self) -> int:
        """Tests the buggy program failed."""
        return len(self.before.failed)

    @property
    def n(self) -> int:
        """Previously failing tests that now pass."""
        return len(self.after.passed & self.before.failed)

    @property
    def regressed(self) -> bool:
        """True when some previously passing test no longer passes."""
        return not self.before.passed <= self.after.passed


def run_program(source: str, test: TestCase, limits: Limits = Limits()) -> str:
    """Execute one program on one test in an isolated subprocess.

    Returns "pass", "fail", "timeout", or "crash". The program runs with a
    fresh empty working directory and reads the test input on stdin.
    """
    with tempfile.TemporaryDirectory(prefix="judge-") as scratch:
        scratch_path = Path(scratch)
        prog = scratch_path / "prog.py"
        prog.write_text(source, encoding="utf-8")
        stdin_file = scratch_path / "stdin.txt"
        stdin_file.write_text(test.input, encoding="utf-8")
        workdir = scratch_path / "work"
        workdir.mkdir()
        try:
            with open(stdin_file, "rb") as stdin:
                proc = subprocess.run(
                    [sys.executable, "-I", str(prog)],
                    stdin=stdin,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    cwd=workdir,
                    timeout=limits.wall_seconds,
                )
        except subprocess.TimeoutExpired:
            return TIMEOUT
    if proc.returncode != 0:
        return CRASH
    actual = proc.stdout.decode("utf-8", errors="replace")
    return PASS if outputs_match(actual, test.expected_output) else FAIL


Runner = Callable[[str, TestCase, Limits], str]


def verdict_from_bundle(bundle: TraceBundle) -> str:
    """Derive a pass/fail verdict from a tracer document (same comparator)."""
    status = bundle.io.exit_status
    if status.kind == "timeout":
        return TIMEOUT
    if status.kind != EXIT_OK:
        return CRASH
    return PASS if outputs_match(bundle.io.actual_output, bundle.io.expected_output) else FAIL


def run_suite(
    source: str,
    tests: Sequence[TestCase],
    limits: Limits = Limits(),
    *,
    runner: Runner | None = None,
    workers: int | None = None,
) -> VerdictSet:
    """Run a program against a whole suite, one isolated process per test.

    Tests execute in parallel up to ``workers``; the verdict set is assembled
    order-independently. ``runner`` defaults to the built-in subprocess
    backend; pass an adapter here to route execution through the external
    tracer instead.
    """
    if not tests:
        raise ValueError("cannot judge against an empty test suite")
    runner = runner or run_program
    workers = workers or min(8, len(tests))
    verdicts: dict[str, str] = {}
    if workers <= 1 or len(tests) == 1:
        for test in tests:
            verdicts[test.id] = runner(source, test, limits)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {test.id: pool.submit(runner, source, test, limits) for test in tests}
            for tid, fut in futures.items():
                verdicts[tid] = fut.result()
    return VerdictSet.from_mapping(verdicts)


def improve_rate(outcome: RepairOutcome) -> float:
    """Fraction of previously failing tests newly passed; 0 on any regression.

    Requires the instance to have been buggy (at least one failing test
    before repair); anything else is a malformed instance.
    """
    if outcome.m == 0:
        raise ValueError("improve rate is undefined when the buggy program failed nothing")
    if outcome.regressed:
        return 0.0
    return outcome.n / outcome.m


def failed_repair_rate(outcomes: Iterable[RepairOutcome]) -> float:
    """Fraction of repairs that break a previously passing test."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("failed repair rate over an empty set is undefined")
    return sum(1 for o in outcomes if o.regressed) / len(outcomes)


def accuracy(outcomes: Iterable[RepairOutcome]) -> float:
    """Fraction of repairs whose program passes the entire suite."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("accuracy over an empty set is undefined")
    return sum(1 for o in outcomes if o.after.all_pass()) / len(outcomes)
