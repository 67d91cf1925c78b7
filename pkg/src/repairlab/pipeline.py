"""Two-stage orchestration: trace, locate, repair, judge, report.

Per-instance failures never abort a batch; they land in the per-instance rows
with an error category. Aggregates are a pure fold over the rows, so a report
can always be recomputed from its persisted outcome records.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import corpus, judge, promptkit
from .diffkit import DiffAnnotation, consistency_reported
from .modelgw import GatewayError, ModelEndpoint, ModelGateway, SessionLog, fingerprint
from .tracelink import Limits, TraceBundle, TracerClient, bundle_to_json

logger = logging.getLogger(__name__)

LOCALIZATION_CATEGORIES = ("AL", "PL", "EL", "NL")


def classify_localization(gold: DiffAnnotation, predicted: DiffAnnotation | None) -> str:
    """Bucket a predicted annotation against the gold one by marked-line sets:
    AL exact match, PL overlap, EL disjoint, NL nothing predicted."""
    if predicted is None or not predicted.buggy_indices:
        return "NL"
    gold_marks = gold.buggy_indices
    pred_marks = predicted.buggy_indices
    if pred_marks == gold_marks:
        return "AL"
    if pred_marks & gold_marks:
        return "PL"
    return "EL"


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    output_dir: Path
    stage1: ModelEndpoint
    stage2: ModelEndpoint
    tests_dir: Path | None = None
    seed: int = 0
    language: str = "Python"
    limits: Limits = field(default_factory=Limits)
    workers: int = 4
    baseline_kind: str = "instruction"
    few_shot_examples: tuple[tuple[str, str, str], ...] = ()
    tracer_command: tuple[str, ...] | None = None
    cache_dir: Path | None = None
    hybrid_ratio: float = 1.0
    sample_count: int = 4


@dataclass
class InstanceRow:
    instance_id: str
    before: dict[str, str]
    after: dict[str, str] | None
    improve: float
    regressed: bool
    all_pass: bool
    consistency: float
    localization: str | None = None
    error: str = ""

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "before": self.before,
            "after": self.after,
            "improve": round(self.improve, 6),
            "regressed": self.regressed,
            "all_pass": self.all_pass,
            "consistency": round(self.consistency, 6),
            "localization": self.localization,
            "error": self.error,
        }


@dataclass
class Report:
    """Aggregate metrics in percent plus the rows they fold over."""

    acc: float
    improve: float
    consistency: float
    fr: float
    rows: list[InstanceRow]
    localization_tally: dict[str, int] | None = None

    @classmethod
    def fold(cls, rows: Sequence[InstanceRow]) -> "Report":
        if not rows:
            raise ValueError("cannot report over zero instances")
        count = len(rows)
        tally: dict[str, int] | None = None
        if any(row.localization is not None for row in rows):
            tally = {cat: 0 for cat in LOCALIZATION_CATEGORIES}
            for row in rows:
                tally[row.localization or "NL"] += 1
        return cls(
            acc=100.0 * sum(row.all_pass for row in rows) / count,
            improve=100.0 * sum(row.improve for row in rows) / count,
            consistency=100.0 * sum(row.consistency for row in rows) / count,
            fr=100.0 * sum(row.regressed for row in rows) / count,
            rows=list(rows),
            localization_tally=tally,
        )

    def to_json(self) -> dict:
        doc = {
            "acc": round(self.acc, 4),
            "improve": round(self.improve, 4),
            "consistency": round(self.consistency, 4),
            "fr": round(self.fr, 4),
            "instances": len(self.rows),
        }
        if self.localization_tally is not None:
            doc["localization"] = dict(sorted(self.localization_tally.items()))
        return doc


def _suite_for(instance: corpus.RepairInstance, tests: Mapping[str, Sequence[corpus.TestCase]]):
    suite = tests.get(instance.problem_id)
    if suite:
        return suite
    # No full suite available: judge against the recorded failed test alone.
    return [instance.failed_test]


def load_tests_dir(tests_dir: str | os.PathLike | None) -> dict[str, list[corpus.TestCase]]:
    """Per-problem suites from a directory of <problem_id>/tests/ folders."""
    if tests_dir is None:
        return {}
    tests: dict[str, list[corpus.TestCase]] = {}
    root = Path(tests_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"tests directory {root} does not exist")
    for problem_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        loaded = corpus.load_test_dir(problem_dir / "tests")
        if not loaded:
            loaded = corpus.load_test_dir(problem_dir)
        if loaded:
            tests[problem_dir.name] = loaded
    return tests


def _trace_instance(
    client: TracerClient | None,
    instance: corpus.RepairInstance,
    limits: Limits,
) -> TraceBundle | None:
    if client is None:
        return None
    try:
        return client.trace_run(instance.buggy_code, instance.failed_test, limits)
    except Exception as exc:  # noqa: BLE001 - tracing failures must not abort the batch
        logger.warning("tracing failed for %s: %s", instance.instance_id, exc)
        return None


def _judge_candidate(
    instance: corpus.RepairInstance,
    candidate: str | None,
    suite: Sequence[corpus.TestCase],
    limits: Limits,
) -> tuple[dict[str, str], dict[str, str] | None, float, bool, bool, float]:
    before = judge.run_suite(instance.buggy_code, suite, limits)
    if candidate is None:
        return before.as_dict(), None, 0.0, False, False, 0.0
    after = judge.run_suite(candidate, suite, limits)
    outcome = judge.RepairOutcome(before=before, after=after)
    improve = judge.improve_rate(outcome) if outcome.m else 0.0
    return (
        before.as_dict(),
        after.as_dict(),
        improve,
        outcome.regressed,
        after.all_pass(),
        consistency_reported(instance.buggy_code, candidate),
    )


def _make_tracer(config: RunConfig) -> TracerClient | None:
    if not config.tracer_command:
        return None
    client = TracerClient(config.tracer_command)
    if not client.available():
        logger.warning("tracer command %s not found; traces disabled", config.tracer_command[0])
        return None
    return client


def run_two_stage(config: RunConfig) -> Report:
    """Trace, locate, repair, and judge every instance; emit the report.

    All intermediate artifacts (traces, session logs, outcome rows, report)
    are persisted under the run directory for replay.
    """
    instances = corpus.read_instances(config.dataset)
    tests = load_tests_dir(config.tests_dir)
    run_dir = Path(config.output_dir)
    (run_dir / "traces").mkdir(parents=True, exist_ok=True)
    gateway1 = ModelGateway(
        config.stage1,
        cache_dir=config.cache_dir,
        session_log=SessionLog(run_dir / "session_stage1.jsonl"),
        language=config.language,
    )
    gateway2 = ModelGateway(
        config.stage2,
        cache_dir=config.cache_dir,
        session_log=SessionLog(run_dir / "session_stage2.jsonl"),
        language=config.language,
    )
    tracer = _make_tracer(config)

    def process(instance: corpus.RepairInstance) -> InstanceRow:
        suite = _suite_for(instance, tests)
        error = ""
        bundle = _trace_instance(tracer, instance, config.limits)
        if bundle is not None:
            trace_path = run_dir / "traces" / f"{instance.instance_id.replace('/', '_')}.json"
            trace_path.write_text(json.dumps(bundle_to_json(bundle)), encoding="utf-8")
        annotation = None
        candidate = None
        try:
            annotation = gateway1.locate(instance, bundle)
        except GatewayError as exc:
            error = f"locate_error: {exc}"
        try:
            candidate = gateway2.repair(instance, annotation)
        except GatewayError as exc:
            error = f"repair_error: {exc}"
        if candidate is None and not error:
            error = "no_code_extracted"
        before, after, improve, regressed, all_pass, cons = _judge_candidate(
            instance, candidate, suite, config.limits
        )
        return InstanceRow(
            instance_id=instance.instance_id,
            before=before,
            after=after,
            improve=improve,
            regressed=regressed,
            all_pass=all_pass,
            consistency=cons,
            localization=classify_localization(instance.diff_label, annotation),
            error=error,
        )

    rows = _map_instances(process, instances, config.workers)
    report = Report.fold(rows)
    _persist_run(run_dir, config, rows, report)
    return report


def run_baseline(config: RunConfig, kind: str | None = None) -> Report:
    """Single-call end-to-end repair with one of the baseline templates."""
    kind = kind or config.baseline_kind
    if kind == "few_shot" and len(config.few_shot_examples) != 2:
        raise ValueError("few_shot baseline requires exactly two configured examples")
    instances = corpus.read_instances(config.dataset)
    tests = load_tests_dir(config.tests_dir)
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway = ModelGateway(
        config.stage2,
        cache_dir=config.cache_dir,
        session_log=SessionLog(run_dir / "session_baseline.jsonl"),
        language=config.language,
    )

    def process(instance: corpus.RepairInstance) -> InstanceRow:
        suite = _suite_for(instance, tests)
        prompt = promptkit.render_baseline(
            kind,
            instance.problem_statement,
            instance.buggy_code,
            config.few_shot_examples,
            config.language,
        )
        fp = fingerprint(kind, instance.problem_statement, instance.buggy_code)
        error = ""
        candidate = None
        try:
            reply = gateway.complete(
                prompt,
                request_fingerprint=fp,
                context={
                    "buggy_code": instance.buggy_code,
                    "fixed_code": instance.fixed_code,
                    "diff_label": instance.diff_label.render(),
                },
            )
            candidate = promptkit.extract_code(reply)
        except GatewayError as exc:
            error = f"model_error: {exc}"
        if candidate is None and not error:
            error = "no_code_extracted"
        before, after, improve, regressed, all_pass, cons = _judge_candidate(
            instance, candidate, suite, config.limits
        )
        return InstanceRow(
            instance_id=instance.instance_id,
            before=before,
            after=after,
            improve=improve,
            regressed=regressed,
            all_pass=all_pass,
            consistency=cons,
            error=error,
        )

    rows = _map_instances(process, instances, config.workers)
    report = Report.fold(rows)
    _persist_run(run_dir, config, rows, report)
    return report


def _map_instances(process, instances, workers: int) -> list[InstanceRow]:
    if workers <= 1 or len(instances) <= 1:
        rows = [process(inst) for inst in instances]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(process, instances))
    rows.sort(key=lambda row: row.instance_id)
    return rows


def _persist_run(run_dir: Path, config: RunConfig, rows: Sequence[InstanceRow], report: Report) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    outcomes = "\n".join(json.dumps(row.to_json(), ensure_ascii=True) for row in rows)
    (run_dir / "outcomes.jsonl").write_text(outcomes + "\n", encoding="utf-8")
    (run_dir / "report.json").write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest = {
        "dataset": str(config.dataset),
        "tests_dir": str(config.tests_dir) if config.tests_dir else None,
        "seed": config.seed,
        "instances": len(rows),
        "files": sorted(
            str(p.relative_to(run_dir)) for p in run_dir.rglob("*") if p.is_file()
        ),
    }
    (run_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def report_from_outcomes(path: str | os.PathLike) -> Report:
    """Rebuild a report by folding persisted outcome rows."""
    rows: list[InstanceRow] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            rows.append(
                InstanceRow(
                    instance_id=doc["instance_id"],
                    before=doc["before"],
                    after=doc["after"],
                    improve=doc["improve"],
                    regressed=doc["regressed"],
                    all_pass=doc["all_pass"],
                    consistency=doc["consistency"],
                    localization=doc.get("localization"),
                    error=doc.get("error", ""),
                )
            )
    return Report.fold(rows)
