"""Suite execution in subprocesses and the three outcome metrics."""

from __future__ import annotations

from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repairlab import judge
from repairlab.corpus import TestCase
from repairlab.tracelink import Limits

SUM_TESTS = [
    TestCase("t1", "1 2\n", "3\n"),
    TestCase("t2", "5 7\n", "12\n"),
    TestCase("t3", "0 0\n", "0\n"),
]
SUM_OK = "a, b = map(int, input().split())\nprint(a + b)\n"
SUM_SILENT = "a, b = map(int, input().split())\n"
SUM_EDGE_BUGGY = "a, b = map(int, input().split())\nprint(a + b if a or b else 1)\n"


class TestRunSuite:
    def test_correct_solution_passes_all(self):
        verdicts = judge.run_suite(SUM_OK, SUM_TESTS)
        assert verdicts.all_pass()

    def test_silent_program_fails_all(self):
        verdicts = judge.run_suite(SUM_SILENT, SUM_TESTS)
        assert verdicts.failed == {"t1", "t2", "t3"}

    def test_edge_case_bug_fails_exactly_one(self):
        verdicts = judge.run_suite(SUM_EDGE_BUGGY, SUM_TESTS)
        assert verdicts.failed == {"t3"}
        assert verdicts.passed == {"t1", "t2"}

    def test_timeout_and_crash_verdicts(self):
        assert (
            judge.run_program("while True:\n    pass\n", SUM_TESTS[0], Limits(wall_seconds=0.5))
            == judge.TIMEOUT
        )
        assert judge.run_program("raise RuntimeError('x')\n", SUM_TESTS[0]) == judge.CRASH

    def test_empty_suite_rejected(self):
        with pytest.raises(ValueError):
            judge.run_suite(SUM_OK, [])

    def test_reproducible(self):
        first = judge.run_suite(SUM_EDGE_BUGGY, SUM_TESTS)
        second = judge.run_suite(SUM_EDGE_BUGGY, SUM_TESTS)
        assert first == second

    def test_sequential_and_parallel_agree(self):
        parallel = judge.run_suite(SUM_EDGE_BUGGY, SUM_TESTS, workers=3)
        sequential = judge.run_suite(SUM_EDGE_BUGGY, SUM_TESTS, workers=1)
        assert parallel == sequential


class TestOutputComparison:
    def test_trailing_whitespace_ignored_per_line(self):
        assert judge.outputs_match("3  \n12\n0", "3\n12   \n0\n")

    def test_final_newline_ignored(self):
        assert judge.outputs_match("3\n", "3")
        assert judge.outputs_match("3\n\n", "3")

    def test_interior_content_exact(self):
        assert not judge.outputs_match("3\n12", "3\n13")
        assert not judge.outputs_match("3\n\n12", "3\n12")


def _verdicts(*pairs) -> judge.VerdictSet:
    return judge.VerdictSet.from_mapping(dict(pairs))


class TestMetrics:
    def test_full_fix_improves_fully(self):
        before = _verdicts(("t1", "fail"), ("t2", "fail"), ("t3", "pass"))
        after = _verdicts(("t1", "pass"), ("t2", "pass"), ("t3", "pass"))
        assert judge.improve_rate(judge.RepairOutcome(before, after)) == 1.0

    def test_partial_fix(self):
        before = _verdicts(*[(f"t{i}", "fail") for i in range(4)])
        after = _verdicts(("t0", "pass"), ("t1", "pass"), ("t2", "fail"), ("t3", "fail"))
        outcome = judge.RepairOutcome(before, after)
        assert outcome.m == 4 and outcome.n == 2
        assert judge.improve_rate(outcome) == 0.5

    def test_regression_zeroes_improvement(self):
        before = _verdicts(("t1", "fail"), ("t2", "fail"), ("t3", "fail"), ("t4", "pass"))
        after = _verdicts(("t1", "pass"), ("t2", "pass"), ("t3", "pass"), ("t4", "fail"))
        outcome = judge.RepairOutcome(before, after)
        assert outcome.n == 3 and outcome.regressed
        assert judge.improve_rate(outcome) == 0.0

    def test_improve_requires_a_buggy_instance(self):
        before = _verdicts(("t1", "pass"))
        after = _verdicts(("t1", "pass"))
        with pytest.raises(ValueError):
            judge.improve_rate(judge.RepairOutcome(before, after))

    def test_timeout_and_crash_count_as_failures(self):
        before = _verdicts(("t1", "timeout"), ("t2", "crash"), ("t3", "pass"))
        assert before.failed == {"t1", "t2"}

    def test_failed_repair_rate(self):
        def outcome(regressed: bool) -> judge.RepairOutcome:
            before = _verdicts(("t1", "pass"), ("t2", "fail"))
            after = _verdicts(("t1", "fail" if regressed else "pass"), ("t2", "pass"))
            return judge.RepairOutcome(before, after)

        assert judge.failed_repair_rate([outcome(False)] * 4) == 0.0
        assert judge.failed_repair_rate([outcome(True), outcome(False), outcome(True), outcome(False)]) == 0.5
        assert judge.failed_repair_rate([outcome(True)] * 3) == 1.0
        with pytest.raises(ValueError):
            judge.failed_repair_rate([])

    def test_accuracy(self):
        full = judge.RepairOutcome(
            _verdicts(("t1", "fail")), _verdicts(("t1", "pass"))
        )
        partial = judge.RepairOutcome(
            _verdicts(("t1", "fail"), ("t2", "fail")),
            _verdicts(("t1", "pass"), ("t2", "fail")),
        )
        assert judge.accuracy([full, full, full]) == 1.0
        assert judge.accuracy([full, partial, partial]) == pytest.approx(1 / 3, abs=1e-12)
        with pytest.raises(ValueError):
            judge.accuracy([])

    def test_nearly_fixed_contributes_zero_accuracy(self):
        before = _verdicts(*[(f"t{i}", "fail") for i in range(10)])
        after = _verdicts(*[(f"t{i}", "pass" if i else "fail") for i in range(10)])
        outcome = judge.RepairOutcome(before, after)
        assert judge.improve_rate(outcome) == 0.9
        assert judge.accuracy([outcome]) == 0.0


verdict_value = st.sampled_from(["pass", "fail", "timeout", "crash"])


@settings(max_examples=300, deadline=None)
@given(
    st.integers(min_value=1, max_value=5).flatmap(
        lambda n: st.tuples(
            st.lists(verdict_value, min_size=n, max_size=n),
            st.lists(verdict_value, min_size=n, max_size=n),
        )
    )
)
def test_metric_properties(pair):
    before_vals, after_vals = pair
    ids = [f"t{i}" for i in range(len(before_vals))]
    before = judge.VerdictSet.from_mapping(dict(zip(ids, before_vals)))
    after = judge.VerdictSet.from_mapping(dict(zip(ids, after_vals)))
    outcome = judge.RepairOutcome(before, after)
    if outcome.m == 0:
        return
    rate = judge.improve_rate(outcome)
    assert 0.0 <= rate <= 1.0
    if rate > 0:
        assert not outcome.regressed
    if rate == 1.0:
        # every previously failing test now passes and nothing regressed
        assert after.all_pass()
        assert judge.accuracy([outcome]) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(verdict_value, verdict_value), min_size=1, max_size=8))
def test_accuracy_bounded_by_regressions(rows):
    outcomes = []
    for i, (b, a) in enumerate(rows):
        before = judge.VerdictSet.from_mapping({"t0": b, "t1": "pass"})
        after = judge.VerdictSet.from_mapping({"t0": a, "t1": "pass"})
        outcomes.append(judge.RepairOutcome(before, after))
    failing_regressed = sum(1 for o in outcomes if o.regressed and not o.after.all_pass())
    acc = Fraction(sum(1 for o in outcomes if o.after.all_pass()), len(outcomes))
    assert acc <= 1 - Fraction(failing_regressed, len(outcomes))
