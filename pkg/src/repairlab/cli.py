"""Command-line entry point.

Subcommands: build-dataset, trace, locate, repair, judge, run, baseline,
export-train, report. Options come from an optional JSON config file plus
flag overrides; endpoints accept either a shorthand like ``mock:perfect`` or
an inline JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, judge, pipeline, trainprep
from .modelgw import Decoding, MockBehavior, ModelEndpoint, ModelGateway, RetryPolicy
from .tracelink import Limits, TracerClient, bundle_to_json

logger = logging.getLogger(__name__)


def endpoint_from_spec(spec) -> ModelEndpoint:
    """Build an endpoint from ``mock:<behavior>``, a JSON string, or a dict."""
    if isinstance(spec, ModelEndpoint):
        return spec
    if isinstance(spec, str):
        if spec.startswith("{"):
            spec = json.loads(spec)
        else:
            kind, _, behavior = spec.partition(":")
            if kind != "mock":
                raise ValueError(
                    f"shorthand endpoints must be mock:<behavior>, got {spec!r}; "
                    "use a JSON object for remote endpoints"
                )
            return ModelEndpoint(kind="mock", mock=MockBehavior(behavior or "echo"))
    decoding_spec = spec.get("decoding", "greedy")
    if decoding_spec == "greedy":
        decoding = Decoding.greedy()
    elif isinstance(decoding_spec, dict):
        decoding = Decoding.sampled(
            top_p=decoding_spec.get("top_p", 0.7),
            temperature=decoding_spec.get("temperature", 1.0),
        )
    else:
        raise ValueError(f"unknown decoding spec {decoding_spec!r}")
    retry_spec = spec.get("retry", {})
    return ModelEndpoint(
        kind=spec.get("kind", "remote"),
        model_name=spec.get("model_name", spec.get("model", "mock")),
        base_url=spec.get("base_url", ""),
        decoding=decoding,
        max_tokens=spec.get("max_tokens", 2048),
        retry=RetryPolicy(
            max_attempts=retry_spec.get("max_attempts", 3),
            backoff_seconds=retry_spec.get("backoff_seconds", 1.0),
        ),
        mock=MockBehavior(
            spec.get("mock", {}).get("kind", "echo"),
            spec.get("mock", {}).get("script", {}),
        ),
        api_key_env=spec.get("api_key_env", "REPAIRLAB_API_KEY"),
    )


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _build_run_config(args, require_dataset: bool = True) -> pipeline.RunConfig:
    conf = _load_config_file(getattr(args, "config", None))

    def pick(flag_name: str, key: str, default=None):
        value = getattr(args, flag_name, None)
        if value is not None:
            return value
        return conf.get(key, default)

    dataset = pick("dataset", "dataset")
    if require_dataset and not dataset:
        raise SystemExit("a dataset is required (--dataset or config key 'dataset')")
    output_dir = pick("out", "output_dir", "runs/latest")
    limits_conf = conf.get("limits", {})
    examples = tuple(tuple(e) for e in conf.get("few_shot_examples", ()))
    tracer_cmd = pick("tracer_cmd", "tracer_command")
    if isinstance(tracer_cmd, str):
        tracer_cmd = tuple(tracer_cmd.split())
    return pipeline.RunConfig(
        dataset=Path(dataset) if dataset else Path("unused"),
        output_dir=Path(output_dir),
        stage1=endpoint_from_spec(pick("stage1", "stage1", "mock:echo")),
        stage2=endpoint_from_spec(pick("stage2", "stage2", "mock:echo")),
        tests_dir=Path(pick("tests_dir", "tests_dir")) if pick("tests_dir", "tests_dir") else None,
        seed=int(pick("seed", "seed", 0)),
        language=pick("language", "language", "Python"),
        limits=Limits(
            wall_seconds=float(limits_conf.get("wall_seconds", 5.0)),
            max_events=int(limits_conf.get("max_events", 10000)),
        ),
        workers=int(pick("workers", "workers", 4)),
        baseline_kind=pick("kind", "baseline_kind", "instruction"),
        few_shot_examples=examples,
        tracer_command=tuple(tracer_cmd) if tracer_cmd else None,
        cache_dir=Path(conf["cache_dir"]) if conf.get("cache_dir") else None,
        hybrid_ratio=float(pick("ratio", "hybrid_ratio", 1.0)),
        sample_count=int(conf.get("sample_count", 4)),
    )


def cmd_build_dataset(args) -> int:
    instances, manifest = corpus.build_dataset(args.archive, args.out, seed=args.seed)
    print(f"built {len(instances)} instances over {len(manifest.problem_counts)} problems")
    print(json.dumps(manifest.split_counts, sort_keys=True))
    return 0


def cmd_trace(args) -> int:
    client = TracerClient(tuple(args.tracer_cmd.split()))
    test = corpus.TestCase(
        id="cli",
        input=Path(args.input).read_text(encoding="utf-8"),
        expected_output=Path(args.expected).read_text(encoding="utf-8"),
    )
    bundle = client.trace_run(
        Path(args.source).read_text(encoding="utf-8"),
        test,
        Limits(wall_seconds=args.wall_seconds),
    )
    json.dump(bundle_to_json(bundle), sys.stdout)
    print()
    return 0


def cmd_locate(args) -> int:
    config = _build_run_config(args)
    instances = corpus.read_instances(config.dataset)
    out = Path(args.out or config.output_dir / "annotations.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    gateway = ModelGateway(config.stage1, language=config.language)
    lines = []
    for inst in instances:
        annotation = gateway.locate(inst, None)
        lines.append(
            json.dumps(
                {
                    "instance_id": inst.instance_id,
                    "annotation": annotation.render() if annotation else None,
                    "valid": bool(annotation and annotation.valid),
                }
            )
        )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} annotations to {out}")
    return 0


def cmd_repair(args) -> int:
    config = _build_run_config(args)
    instances = corpus.read_instances(config.dataset)
    out = Path(args.out or config.output_dir / "candidates.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    gateway = ModelGateway(config.stage2, language=config.language)
    lines = []
    for inst in instances:
        candidate = gateway.repair(inst, inst.diff_label)
        lines.append(json.dumps({"instance_id": inst.instance_id, "candidate": candidate}))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} candidates to {out}")
    return 0


def cmd_judge(args) -> int:
    config = _build_run_config(args)
    instances = corpus.read_instances(config.dataset)
    tests = pipeline.load_tests_dir(config.tests_dir)
    rows = []
    for inst in instances:
        suite = tests.get(inst.problem_id) or [inst.failed_test]
        verdicts = judge.run_suite(inst.buggy_code, suite, config.limits)
        rows.append({"instance_id": inst.instance_id, "verdicts": verdicts.as_dict()})
    print(json.dumps(rows, indent=2))
    return 0


def cmd_run(args) -> int:
    config = _build_run_config(args)
    report = pipeline.run_two_stage(config)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_baseline(args) -> int:
    config = _build_run_config(args)
    report = pipeline.run_baseline(config, args.kind)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_export_train(args) -> int:
    config = _build_run_config(args)
    instances = corpus.read_instances(config.dataset)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    what = args.what
    if what == "locator":
        count = trainprep.export_locator_records(
            instances, {}, out_dir / "locator.jsonl", config.language
        )
    elif what == "modifier":
        gateway = ModelGateway(config.stage1, language=config.language)
        split = trainprep.make_hybrid_split(instances, config.hybrid_ratio, gateway, config.seed)
        count = trainprep.export_modifier_records(split, out_dir / "modifier.jsonl", config.language)
    elif what == "preference":
        tests = pipeline.load_tests_dir(config.tests_dir)
        gateway = ModelGateway(config.stage2, language=config.language)
        candidates: dict[str, list[str]] = {}
        for inst in instances:
            seen: list[str] = []
            for _ in range(config.sample_count):
                code = gateway.repair(inst, inst.diff_label)
                if code is not None:
                    seen.append(code)
            candidates[inst.instance_id] = seen

        def judge_fn(inst, code):
            suite = tests.get(inst.problem_id) or [inst.failed_test]
            return judge.RepairOutcome(
                before=judge.run_suite(inst.buggy_code, suite, config.limits),
                after=judge.run_suite(code, suite, config.limits),
            )

        pairs = trainprep.mine_preference_pairs(instances, candidates, judge_fn)
        count = trainprep.export_preference_records(pairs, out_dir / "preference.jsonl", config.language)
    else:
        raise SystemExit(f"unknown export kind {what!r}")
    print(f"wrote {count} {what} records under {out_dir}")
    return 0


def cmd_report(args) -> int:
    report = pipeline.report_from_outcomes(args.outcomes)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, with_endpoints: bool = True) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--dataset", help="instances JSONL path")
    parser.add_argument("--tests-dir", dest="tests_dir", help="per-problem test suites directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--language", default=None)
    parser.add_argument("--tracer-cmd", dest="tracer_cmd", default=None,
                        help="external tracer command, e.g. 'tracer'")
    if with_endpoints:
        parser.add_argument("--stage1", help="stage-one endpoint (mock:<kind> or JSON)")
        parser.add_argument("--stage2", help="stage-two endpoint (mock:<kind> or JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repairlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="build instances from a submission archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("trace", help="trace one program on one test via the external tracer")
    p.add_argument("source")
    p.add_argument("--input", required=True)
    p.add_argument("--expected", required=True)
    p.add_argument("--tracer-cmd", dest="tracer_cmd", default="tracer")
    p.add_argument("--wall-seconds", dest="wall_seconds", type=float, default=5.0)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("locate", help="stage one only: produce annotations")
    _add_config_flags(p)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("repair", help="stage two only: produce candidate fixes")
    _add_config_flags(p)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("judge", help="run buggy programs against their suites")
    _add_config_flags(p, with_endpoints=False)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("run", help="full two-stage pipeline")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="single-call baseline pipeline")
    _add_config_flags(p)
    p.add_argument("--kind", choices=("instruction", "cot", "few_shot"), default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("export-train", help="write training-data JSONL files")
    _add_config_flags(p)
    p.add_argument("--what", choices=("locator", "modifier", "preference"), required=True)
    p.add_argument("--ratio", type=float, default=None, help="hybrid split ratio k")
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("report", help="aggregate persisted outcome rows")
    p.add_argument("--outcomes", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
