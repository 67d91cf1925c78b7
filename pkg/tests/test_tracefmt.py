"""Inline-comment trace rendering and the I/O block."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repairlab import tracefmt
from repairlab.corpus import strip_comments
from repairlab.tracelink import ExitStatus, IoCapture, TraceEvent


def ev(step, line, **vars_):
    return TraceEvent(step, line, tuple(vars_.items()))


class TestRenderTrace:
    def test_straight_line_program(self):
        source = "x = 1\nprint(x)"
        annotated = tracefmt.render_trace(source, [ev(1, 1, x="1"), ev(2, 2)])
        assert annotated.to_text() == "x = 1 # step=1: x=1\nprint(x) # step=2"
        assert not annotated.compression_marks

    def test_unexecuted_lines_have_no_comment(self):
        source = "if False:\n    x = 1\nprint(0)"
        annotated = tracefmt.render_trace(source, [ev(1, 1), ev(2, 3)])
        assert annotated.lines[1] == ("    x = 1", "")

    def test_loop_visited_five_times_compresses(self):
        source = "for i in range(5):\n    t = i"
        events = [ev(s, 2, t=str(s - 1)) for s in range(1, 6)]
        annotated = tracefmt.render_trace(source, events)
        comment = annotated.lines[1][1]
        assert comment == "step=1: t=0; ...; step=5: t=4"
        assert annotated.compression_marks == {1}

    def test_exactly_three_visits_not_compressed(self):
        source = "for i in range(3):\n    t = i"
        events = [ev(s, 2, t=str(s - 1)) for s in range(1, 4)]
        annotated = tracefmt.render_trace(source, events)
        assert annotated.lines[1][1] == "step=1: t=0; step=2: t=1; step=3: t=2"
        assert not annotated.compression_marks

    def test_four_visits_compress(self):
        source = "for i in range(4):\n    t = i"
        events = [ev(s, 2, t=str(s - 1)) for s in range(1, 5)]
        annotated = tracefmt.render_trace(source, events)
        assert annotated.lines[1][1] == "step=1: t=0; ...; step=4: t=3"

    def test_multiple_variables_keep_event_order(self):
        annotated = tracefmt.render_trace("a, b = 1, 2", [ev(1, 1, a="1", b="2")])
        assert annotated.lines[0][1] == "step=1: a=1, b=2"

    def test_event_beyond_source_is_an_error(self):
        with pytest.raises(ValueError):
            tracefmt.render_trace("x = 1", [ev(1, 5)])

    def test_source_lines_never_altered(self):
        source = "x = 1\n\n  y = 2  "
        annotated = tracefmt.render_trace(source, [ev(1, 1)])
        assert [text for text, _ in annotated.lines] == source.splitlines()

    @settings(max_examples=80, deadline=None)
    @given(st.integers(min_value=1, max_value=12))
    def test_compression_soundness(self, visits):
        source = "line_one = 0\nline_two = 1"
        events = [ev(s, 2, v=str(s)) for s in range(1, visits + 1)]
        annotated = tracefmt.render_trace(source, events)
        comment = annotated.lines[1][1]
        parts = comment.split("; ")
        shown = sum(1 for p in parts if p != tracefmt.ELLIPSIS)
        ellipses = sum(1 for p in parts if p == tracefmt.ELLIPSIS)
        if visits > 3:
            assert shown == 2 and ellipses == 1
        else:
            assert shown == visits and ellipses == 0

    def test_structure_preserved_through_comment_stripping(self):
        # comment-free source: stripping the rendered annotation recovers it
        source = "x = 1\ny = x + 1\nprint(y)"
        events = [ev(1, 1, x="1"), ev(2, 2, y="2"), ev(3, 3)]
        rendered = tracefmt.render_trace(source, events).to_text()
        assert strip_comments(rendered) == source


class TestRenderIo:
    def test_ok_run_has_three_sections(self):
        block = tracefmt.render_io(IoCapture("1 2\n", "3\n", "3\n"))
        assert block == "Input:\n1 2\nExpected Output:\n3\nActual Output:\n3"

    def test_mismatch_shows_both_values(self):
        block = tracefmt.render_io(IoCapture("2\n", "4\n", "3\n"))
        assert "Expected Output:\n4" in block
        assert "Actual Output:\n3" in block

    def test_timeout_replaces_actual_output(self):
        io = IoCapture("1\n", "2\n", "", ExitStatus("timeout"))
        block = tracefmt.render_io(io)
        assert block.endswith(f"Actual Output:\n{tracefmt.TIMEOUT_NOTICE}")

    def test_exception_appends_final_message(self):
        io = IoCapture(
            "1\n", "2\n", "partial\n",
            ExitStatus("exception", "AssertionError", "Expected output is 4, but the received output is 3"),
        )
        block = tracefmt.render_io(io)
        assert block.endswith(
            "Actual Output:\npartial\n"
            "AssertionError: Expected output is 4, but the received output is 3"
        )

    def test_exception_without_output(self):
        io = IoCapture("1\n", "2\n", "", ExitStatus("exception", "ZeroDivisionError", "division by zero"))
        assert tracefmt.render_io(io).endswith("Actual Output:\nZeroDivisionError: division by zero")

    def test_rendering_is_pure(self):
        io = IoCapture("1\n", "2\n", "3\n")
        assert tracefmt.render_io(io) == tracefmt.render_io(io)
