"""Contract checks: the repair harness drives the tracer purely through the
CLI + JSON interface."""

from __future__ import annotations

import json
import shutil

import pytest

pytest.importorskip("repairlab", reason="repair harness not installed alongside the tracer")

from repairlab import tracefmt
from repairlab.corpus import TestCase
from repairlab.judge import verdict_from_bundle
from repairlab.tracelink import Limits, TracerClient

pytestmark = pytest.mark.skipif(
    shutil.which("tracer") is None, reason="tracer console script not installed"
)


@pytest.fixture
def client() -> TracerClient:
    return TracerClient(("tracer",))


class TestClientContract:
    def test_trace_run_round_trip(self, client):
        bundle = client.trace_run(
            "n = int(input())\nprint(n + 1)\n",
            TestCase("t1", "2\n", "4\n"),
            Limits(wall_seconds=3.0),
        )
        assert bundle.io.actual_output == "3\n"
        assert bundle.io.expected_output == "4\n"
        assert bundle.io.exit_status.ok
        assert [e.line_no for e in bundle.events] == [1, 2]
        assert bundle.events[0].vars == {"n": "2"}

    def test_verdicts_from_bundles(self, client):
        ok = client.trace_run("print(input())", TestCase("t", "x\n", "x\n"))
        assert verdict_from_bundle(ok) == "pass"
        wrong = client.trace_run("print('no')", TestCase("t", "", "yes\n"))
        assert verdict_from_bundle(wrong) == "fail"
        hung = client.trace_run(
            "while True:\n    pass\n", TestCase("t", "", "x"), Limits(wall_seconds=0.4)
        )
        assert verdict_from_bundle(hung) == "timeout"
        crash = client.trace_run("1 / 0\n", TestCase("t", "", ""))
        assert verdict_from_bundle(crash) == "crash"

    def test_trace_renders_into_prompt_comments(self, client):
        source = "total = 0\nfor i in range(5):\n    total += i\nprint(total)\n"
        bundle = client.trace_run(source, TestCase("t", "", "10\n"))
        annotated = tracefmt.render_trace(source, bundle.events)
        loop_comment = annotated.lines[2][1]
        assert loop_comment.count("...") == 1  # five visits compress
        assert 2 in annotated.compression_marks
        io_block = tracefmt.render_io(bundle.io)
        assert "Actual Output:\n10" in io_block


def _tiny_corpus(tmp_path):
    """Two runnable instances with suites on disk, built through public APIs."""
    from repairlab import corpus
    from repairlab.diffkit import annotate

    instances = []
    tests_dir = tmp_path / "tests"
    for idx in range(2):
        add = idx + 2
        problem_id = f"p{idx}"
        buggy = f"n = int(input())\nif n < 5:\n    print(n + {add})\nelse:\n    print(n)\n"
        fixed = f"n = int(input())\nif n < 5:\n    print(n + {add})\nelse:\n    print(n + {add})\n"
        suite = [
            corpus.TestCase("t1", "1\n", f"{1 + add}\n"),
            corpus.TestCase("t2", "7\n", f"{7 + add}\n"),
        ]
        problem_dir = tests_dir / problem_id / "tests"
        problem_dir.mkdir(parents=True)
        for test in suite:
            (problem_dir / f"{test.id}.in").write_text(test.input, encoding="utf-8")
            (problem_dir / f"{test.id}.out").write_text(test.expected_output, encoding="utf-8")
        instances.append(
            corpus.RepairInstance(
                instance_id=f"{problem_id}/u0/r0-a0",
                problem_id=problem_id,
                problem_statement=f"Read n and print n + {add}.",
                buggy_code=buggy,
                failed_test=suite[1],
                diff_label=annotate(buggy, fixed),
                fixed_code=fixed,
                split="test",
            )
        )
    dataset = tmp_path / "instances.jsonl"
    corpus.write_instances(dataset, instances)
    return dataset, tests_dir


class TestHarnessTraceSubcommand:
    def test_cli_trace_prints_contract_document(self, tmp_path, capsys):
        from repairlab import cli

        prog = tmp_path / "prog.py"
        prog.write_text("n = int(input())\nprint(n + 1)\n", encoding="utf-8")
        (tmp_path / "in.txt").write_text("2\n", encoding="utf-8")
        (tmp_path / "exp.txt").write_text("4\n", encoding="utf-8")
        rc = cli.main(
            [
                "trace", str(prog),
                "--input", str(tmp_path / "in.txt"),
                "--expected", str(tmp_path / "exp.txt"),
                "--tracer-cmd", "tracer",
            ]
        )
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["schema_version"] == 1
        assert doc["io"]["actual_output"] == "3\n"
        assert doc["events"][0] == {"step": 1, "line": 1, "vars": {"n": "2"}}


class TestPipelineWithRealTracer:
    def test_two_stage_run_uses_traces(self, tmp_path):
        from repairlab import pipeline
        from repairlab.modelgw import MockBehavior, ModelEndpoint

        dataset, tests_dir = _tiny_corpus(tmp_path)
        config = pipeline.RunConfig(
            dataset=dataset,
            output_dir=tmp_path / "run",
            stage1=ModelEndpoint(kind="mock", mock=MockBehavior("gold")),
            stage2=ModelEndpoint(kind="mock", mock=MockBehavior("perfect")),
            tests_dir=tests_dir,
            workers=2,
            limits=Limits(wall_seconds=5.0),
            tracer_command=("tracer",),
        )
        report = pipeline.run_two_stage(config)
        assert report.acc == 100.0
        traces = sorted((tmp_path / "run" / "traces").glob("*.json"))
        assert len(traces) == 2
        prompts = [
            json.loads(line)["prompt"]
            for line in (tmp_path / "run" / "session_stage1.jsonl").read_text().splitlines()
        ]
        assert all("step=1" in p for p in prompts)  # real trace comments in stage one
        assert all("Actual Output:" in p for p in prompts)
