"""Repair-instance data model and the dataset builder.

Builds (problem, buggy code, failed test, buggy-line annotation, fixed code)
instances from an archive of user submissions: for every (user, problem) the
builder pairs each rejected submission with a later accepted one, keeps pairs
whose comment-stripped sources score above the similarity threshold, selects
the single highest-scoring pair, and attaches one seeded-random failed test.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .diffkit import DiffAnnotation, annotate, parse_code_diff

logger = logging.getLogger(__name__)

ACCEPTED = "accepted"
REJECTED = "rejected"
SPLITS = ("train", "val", "test")
SPLIT_CAPS = {"train": 150, "val": 10, "test": 20}
BLEU_THRESHOLD = 0.6


@dataclass(frozen=True)
class TestCase:
    """One input/expected-output pair; ids are unique within a problem."""

    __test__ = False  # keep pytest from collecting this domain type

    id: str
    input: str
    expected_output: str


@dataclass(frozen=True)
class Submission:
    """A single archived submission. Timestamps totally order a user's
    submissions to one problem."""

    submission_id: str
    user_id: str
    problem_id: str
    timestamp: int
    source: str
    verdict: str  # "accepted" | "rejected"

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("submission source must be non-empty")
        if self.verdict not in (ACCEPTED, REJECTED):
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass
class RepairInstance:
    """One repair task: fix ``buggy_code`` so that it behaves like
    ``fixed_code``, guided by ``failed_test`` and ``diff_label``."""

    instance_id: str
    problem_id: str
    problem_statement: str
    buggy_code: str
    failed_test: TestCase
    diff_label: DiffAnnotation
    fixed_code: str
    split: str = ""


@dataclass
class DatasetManifest:
    """Final counts and the problem-to-split assignment of a built dataset."""

    seed: int
    split_counts: dict[str, int]
    problem_counts: dict[str, int]
    assignments: dict[str, str]

    def validate(self) -> None:
        for problem, split in self.assignments.items():
            if split not in SPLITS:
                raise ValueError(f"problem {problem} assigned to unknown split {split}")
        for problem, count in self.problem_counts.items():
            cap = SPLIT_CAPS[self.assignments[problem]]
            if count > cap:
                raise ValueError(f"problem {problem} holds {count} instances, cap is {cap}")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "split_counts": dict(sorted(self.split_counts.items())),
            "problem_counts": dict(sorted(self.problem_counts.items())),
            "assignments": dict(sorted(self.assignments.items())),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DatasetManifest":
        return cls(
            seed=doc["seed"],
            split_counts=dict(doc["split_counts"]),
            problem_counts=dict(doc["problem_counts"]),
            assignments=dict(doc["assignments"]),
        )


def strip_comments(source: str) -> str:
    """Remove hash comments and the blank lines that removal leaves behind.

    String literals survive intact, including hashes inside single-, double-
    and triple-quoted strings. A string left unterminated at a line end is
    treated as running to the end of that line. Docstrings are string
    expressions and are kept.
    """
    lines: list[str] = []
    buf: list[str] = []
    quote: str | None = None
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if quote is None:
            if ch == "#":
                while i < n and source[i] != "\n":
                    i += 1
                continue
            if ch in "'\"":
                triple = source[i : i + 3]
                if triple in ("'''", '"""'):
                    quote = triple
                    buf.append(triple)
                    i += 3
                    continue
                quote = ch
                buf.append(ch)
                i += 1
                continue
            if ch == "\n":
                lines.append("".join(buf))
                buf = []
                i += 1
                continue
            buf.append(ch)
            i += 1
            continue
        if ch == "\\" and i + 1 < n:
            buf.append(source[i : i + 2])
            i += 2
            continue
        if len(quote) == 3:
            if source[i : i + 3] == quote:
                buf.append(quote)
                quote = None
                i += 3
                continue
            if ch == "\n":
                lines.append("".join(buf))
                buf = []
                i += 1
                continue
            buf.append(ch)
            i += 1
            continue
        if ch == quote:
            buf.append(ch)
            quote = None
            i += 1
            continue
        if ch == "\n":
            # unterminated single-quoted string: runs to end of line
            lines.append("".join(buf))
            buf = []
            quote = None
            i += 1
            continue
        buf.append(ch)
        i += 1
    lines.append("".join(buf))
    stripped = [line.rstrip() for line in lines]
    return "\n".join(line for line in stripped if line)


# Runs of word characters form one token; every other non-space character is
# its own token, so "a+=1" tokenizes to ["a", "+", "=", "1"].
_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


def bleu_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def code_bleu(a: str, b: str, max_n: int = 4, eps: float = 1e-9) -> float:
    """Textual similarity of two code fragments in [0, 1].

    Standard BLEU with uniform weights over n-grams up to ``max_n``, a brevity
    penalty, and additive smoothing: ``eps`` is added to the numerator and
    denominator of every n-gram precision, which keeps identical texts at
    exactly 1.0 while pushing fully disjoint texts far below 1e-6. ``a`` is
    the candidate, ``b`` the reference. Texts that tokenize to nothing score 0.
    """
    cand = bleu_tokens(a)
    ref = bleu_tokens(b)
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        total = max(len(cand) - n + 1, 0)
        log_sum += math.log((matches + eps) / (total + eps)) / max_n
    brevity = 1.0 if len(cand) > len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum)


def _pair_rng(seed: int, user_id: str, problem_id: str) -> random.Random:
    return random.Random(f"{seed}:{user_id}:{problem_id}")


def build_pairs(
    submissions: Iterable[Submission],
    tests: Mapping[str, Sequence[TestCase]],
    *,
    statements: Mapping[str, str] | None = None,
    seed: int = 0,
    threshold: float = BLEU_THRESHOLD,
    run_tests: Callable[[str, Sequence[TestCase]], "object"] | None = None,
) -> list[RepairInstance]:
    """Pair rejected submissions with later accepted ones into repair instances.

    For each (user, problem): every (rejected, accepted) pair with
    rejected.timestamp < accepted.timestamp is scored with ``code_bleu`` on
    comment-stripped sources; pairs at or below ``threshold`` are discarded
    and only the maximum-scoring survivor is kept (ties broken by earliest
    accepted timestamp, then submission ids). The accepted source must pass
    the problem's full test suite and the rejected source must fail at least
    one test; one failed test is attached via a seeded RNG keyed by
    (seed, user, problem).

    ``run_tests(source, tests)`` must return an object with a ``failed``
    attribute of failing test ids; it defaults to the built-in judge backend.
    """
    if run_tests is None:
        from .judge import run_suite

        run_tests = run_suite
    statements = statements or {}
    groups: dict[tuple[str, str], list[Submission]] = defaultdict(list)
    for sub in submissions:
        groups[(sub.user_id, sub.problem_id)].append(sub)

    instances: list[RepairInstance] = []
    for (user_id, problem_id), subs in sorted(groups.items()):
        suite = list(tests.get(problem_id, ()))
        if not suite:
            logger.warning("no tests for problem %s; skipping user %s", problem_id, user_id)
            continue
        rejected = [s for s in subs if s.verdict == REJECTED]
        accepted = [s for s in subs if s.verdict == ACCEPTED]
        best: tuple | None = None
        for rej in rejected:
            rej_stripped = strip_comments(rej.source)
            for acc in accepted:
                if not rej.timestamp < acc.timestamp:
                    continue
                score = code_bleu(rej_stripped, strip_comments(acc.source))
                if score <= threshold:
                    continue
                order = (-score, acc.timestamp, acc.submission_id, rej.submission_id)
                if best is None or order < best[0]:
                    best = (order, rej, acc)
        if best is None:
            continue
        _, rej, acc = best
        if sorted(run_tests(acc.source, suite).failed):
            logger.warning(
                "accepted submission %s fails its own test suite; skipping pair", acc.submission_id
            )
            continue
        failing = sorted(run_tests(rej.source, suite).failed)
        if not failing:
            logger.warning(
                "rejected submission %s passes the test suite; skipping pair", rej.submission_id
            )
            continue
        rng = _pair_rng(seed, user_id, problem_id)
        failed_id = failing[rng.randrange(len(failing))]
        failed_test = next(t for t in suite if t.id == failed_id)
        instances.append(
            RepairInstance(
                instance_id=f"{problem_id}/{user_id}/{rej.submission_id}-{acc.submission_id}",
                problem_id=problem_id,
                problem_statement=statements.get(problem_id, ""),
                buggy_code=rej.source,
                failed_test=failed_test,
                diff_label=annotate(rej.source, acc.source),
                fixed_code=acc.source,
            )
        )
    instances.sort(key=lambda inst: inst.instance_id)
    return instances


def split_and_cap(
    instances: Sequence[RepairInstance], seed: int
) -> tuple[list[RepairInstance], DatasetManifest]:
    """Partition problems 8:1:1 into train/val/test and cap per-problem counts.

    Problems (not instances) are shuffled with ``seed`` and assigned so that
    roughly one tenth each go to val and test; every problem lands in exactly
    one split. Within a problem, instances beyond the split's cap (150/10/20)
    are dropped by seeded subsampling. Returns the kept instances, each with
    its split assigned, plus the manifest.
    """
    problems = sorted({inst.problem_id for inst in instances})
    if len(problems) < 3:
        raise ValueError("need at least 3 problems to form train/val/test splits")
    shuffled = list(problems)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_val = max(1, round(n * 0.1))
    n_test = max(1, round(n * 0.1))
    n_train = n - n_val - n_test
    assignments: dict[str, str] = {}
    for problem in shuffled[:n_train]:
        assignments[problem] = "train"
    for problem in shuffled[n_train : n_train + n_val]:
        assignments[problem] = "val"
    for problem in shuffled[n_train + n_val :]:
        assignments[problem] = "test"

    by_problem: dict[str, list[RepairInstance]] = defaultdict(list)
    for inst in instances:
        by_problem[inst.problem_id].append(inst)

    kept: list[RepairInstance] = []
    problem_counts: dict[str, int] = {}
    for problem in problems:
        split = assignments[problem]
        rows = sorted(by_problem[problem], key=lambda inst: inst.instance_id)
        cap = SPLIT_CAPS[split]
        if len(rows) > cap:
            rng = random.Random(f"{seed}:{problem}")
            rows = sorted(rng.sample(rows, cap), key=lambda inst: inst.instance_id)
        for inst in rows:
            inst.split = split
        kept.extend(rows)
        problem_counts[problem] = len(rows)

    order = {name: idx for idx, name in enumerate(SPLITS)}
    kept.sort(key=lambda inst: (order[inst.split], inst.instance_id))
    manifest = DatasetManifest(
        seed=seed,
        split_counts=dict(Counter(inst.split for inst in kept)),
        problem_counts=problem_counts,
        assignments=assignments,
    )
    manifest.validate()
    return kept, manifest


# --- archive and JSONL input/output -----------------------------------------

def load_archive(root: str | os.PathLike) -> tuple[list[Submission], dict[str, list[TestCase]], dict[str, str]]:
    """Read a submission archive from disk.

    Layout::

        root/
          submissions/<submission_id>.py     source text
          submissions/<submission_id>.json   {"user_id", "problem_id", "timestamp", "verdict"}
          problems/<problem_id>/statement.txt
          problems/<problem_id>/tests/<test_id>.in
          problems/<problem_id>/tests/<test_id>.out
    """
    root = Path(root)
    submissions: list[Submission] = []
    for meta_path in sorted((root / "submissions").glob("*.json")):
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        source_path = meta_path.with_suffix(".py")
        submissions.append(
            Submission(
                submission_id=meta_path.stem,
                user_id=meta["user_id"],
                problem_id=meta["problem_id"],
                timestamp=int(meta["timestamp"]),
                source=source_path.read_text(encoding="utf-8"),
                verdict=meta["verdict"],
            )
        )
    tests: dict[str, list[TestCase]] = {}
    statements: dict[str, str] = {}
    problems_dir = root / "problems"
    if problems_dir.is_dir():
        for problem_dir in sorted(p for p in problems_dir.iterdir() if p.is_dir()):
            statement = problem_dir / "statement.txt"
            if statement.exists():
                statements[problem_dir.name] = statement.read_text(encoding="utf-8")
            tests[problem_dir.name] = load_test_dir(problem_dir / "tests")
    return submissions, tests, statements


def load_test_dir(tests_dir: str | os.PathLike) -> list[TestCase]:
    """Read ``<id>.in`` / ``<id>.out`` pairs from one problem's test directory."""
    tests: list[TestCase] = []
    tests_dir = Path(tests_dir)
    if not tests_dir.is_dir():
        return tests
    for in_path in sorted(tests_dir.glob("*.in")):
        out_path = in_path.with_suffix(".out")
        if not out_path.exists():
            logger.warning("test input %s has no matching .out file", in_path)
            continue
        tests.append(
            TestCase(
                id=in_path.stem,
                input=in_path.read_text(encoding="utf-8"),
                expected_output=out_path.read_text(encoding="utf-8"),
            )
        )
    return tests


def instance_to_record(inst: RepairInstance) -> dict:
    return {
        "id": inst.instance_id,
        "problem_id": inst.problem_id,
        "problem_statement": inst.problem_statement,
        "buggy_code": inst.buggy_code,
        "failed_test": {
            "id": inst.failed_test.id,
            "input": inst.failed_test.input,
            "expected_output": inst.failed_test.expected_output,
        },
        "diff_label": inst.diff_label.render(),
        "fixed_code": inst.fixed_code,
        "split": inst.split,
    }


def instance_from_record(record: Mapping) -> RepairInstance:
    buggy = record["buggy_code"]
    label = parse_code_diff(record["diff_label"], buggy)
    if label is None or not label.valid:
        raise ValueError(f"instance {record.get('id')!r} carries an unparseable diff_label")
    test = record["failed_test"]
    return RepairInstance(
        instance_id=record["id"],
        problem_id=record.get("problem_id", ""),
        problem_statement=record["problem_statement"],
        buggy_code=buggy,
        failed_test=TestCase(
            id=test.get("id", "t0"),
            input=test["input"],
            expected_output=test["expected_output"],
        ),
        diff_label=label,
        fixed_code=record["fixed_code"],
        split=record.get("split", ""),
    )


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_instances(path: str | os.PathLike, instances: Sequence[RepairInstance]) -> None:
    lines = [json.dumps(instance_to_record(inst), ensure_ascii=True) for inst in instances]
    _atomic_write(Path(path), "\n".join(lines) + ("\n" if lines else ""))


def read_instances(path: str | os.PathLike) -> list[RepairInstance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                instances.append(instance_from_record(json.loads(line)))
    return instances


def write_manifest(path: str | os.PathLike, manifest: DatasetManifest) -> None:
    _atomic_write(Path(path), json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")


def build_dataset(
    archive_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    seed: int = 0,
    threshold: float = BLEU_THRESHOLD,
) -> tuple[list[RepairInstance], DatasetManifest]:
    """End-to-end build: archive on disk in, instances.jsonl + manifest.json out."""
    submissions, tests, statements = load_archive(archive_dir)
    instances = build_pairs(submissions, tests, statements=statements, seed=seed, threshold=threshold)
    kept, manifest = split_and_cap(instances, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_instances(out / "instances.jsonl", kept)
    write_manifest(out / "manifest.json", manifest)
    return kept, manifest
