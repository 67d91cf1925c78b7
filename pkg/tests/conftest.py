"""Shared fixtures: synthetic repair corpora with real runnable programs."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from repairlab import corpus
from repairlab.diffkit import annotate


def make_synthetic_instance(idx: int) -> tuple[corpus.RepairInstance, list[corpus.TestCase]]:
    """One tiny repair task: add a constant to the input number.

    The buggy program only handles small inputs, so it passes one of the
    three tests; the fix changes exactly one line.
    """
    add = idx % 7 + 2
    problem_id = f"p{idx:02d}"
    statement = f"Read an integer n from standard input and print n + {add}."
    buggy = (
        "n = int(input())\n"
        "if n < 5:\n"
        f"    print(n + {add})\n"
        "else:\n"
        "    print(n)\n"
    )
    fixed = (
        "n = int(input())\n"
        "if n < 5:\n"
        f"    print(n + {add})\n"
        "else:\n"
        f"    print(n + {add})\n"
    )
    tests = [
        corpus.TestCase("t1", "1\n", f"{1 + add}\n"),
        corpus.TestCase("t2", "7\n", f"{7 + add}\n"),
        corpus.TestCase("t3", "12\n", f"{12 + add}\n"),
    ]
    instance = corpus.RepairInstance(
        instance_id=f"{problem_id}/u0/r0-a0",
        problem_id=problem_id,
        problem_statement=statement,
        buggy_code=buggy,
        failed_test=tests[1],
        diff_label=annotate(buggy, fixed),
        fixed_code=fixed,
        split="test",
    )
    return instance, tests


def make_synthetic_corpus(count: int) -> tuple[list[corpus.RepairInstance], dict[str, list[corpus.TestCase]]]:
    instances = []
    tests: dict[str, list[corpus.TestCase]] = {}
    for idx in range(count):
        instance, suite = make_synthetic_instance(idx)
        instances.append(instance)
        tests[instance.problem_id] = suite
    return instances, tests


def write_corpus_files(
    root: Path,
    instances: list[corpus.RepairInstance],
    tests: dict[str, list[corpus.TestCase]],
) -> tuple[Path, Path]:
    """Persist a dataset JSONL plus a per-problem tests directory."""
    dataset = root / "instances.jsonl"
    corpus.write_instances(dataset, instances)
    tests_dir = root / "tests"
    for problem_id, suite in tests.items():
        problem_dir = tests_dir / problem_id / "tests"
        problem_dir.mkdir(parents=True, exist_ok=True)
        for test in suite:
            (problem_dir / f"{test.id}.in").write_text(test.input, encoding="utf-8")
            (problem_dir / f"{test.id}.out").write_text(test.expected_output, encoding="utf-8")
    return dataset, tests_dir


@pytest.fixture
def small_corpus(tmp_path):
    """Six synthetic instances with suites on disk; fast enough for unit tests."""
    instances, tests = make_synthetic_corpus(6)
    dataset, tests_dir = write_corpus_files(tmp_path, instances, tests)
    return instances, tests, dataset, tests_dir


def write_submission(root: Path, sub_id: str, user: str, problem: str, ts: int, source: str, verdict: str) -> None:
    subs = root / "submissions"
    subs.mkdir(parents=True, exist_ok=True)
    (subs / f"{sub_id}.py").write_text(source, encoding="utf-8")
    (subs / f"{sub_id}.json").write_text(
        json.dumps({"user_id": user, "problem_id": problem, "timestamp": ts, "verdict": verdict}),
        encoding="utf-8",
    )


def write_problem(root: Path, problem: str, statement: str, tests: list[corpus.TestCase]) -> None:
    pdir = root / "problems" / problem
    tdir = pdir / "tests"
    tdir.mkdir(parents=True, exist_ok=True)
    (pdir / "statement.txt").write_text(statement, encoding="utf-8")
    for test in tests:
        (tdir / f"{test.id}.in").write_text(test.input, encoding="utf-8")
        (tdir / f"{test.id}.out").write_text(test.expected_output, encoding="utf-8")
