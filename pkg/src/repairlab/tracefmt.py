"""Render execution traces as inline comments aligned with the source.

The annotated program keeps the original source lines untouched and appends
one hash comment per executed line describing every visit; long loops are
compressed with an ellipsis so the annotation stays compact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .tracelink import EXIT_EXCEPTION, EXIT_TIMEOUT, IoCapture, TraceEvent

ELLIPSIS = "..."
MAX_VISITS_SHOWN = 3
TIMEOUT_NOTICE = "[execution timed out]"


@dataclass(frozen=True)
class AnnotatedProgram:
    """Source lines paired with their trace comments (empty string = none)."""

    lines: tuple[tuple[str, str], ...]  # (source_text, comment_text)
    compression_marks: frozenset[int] = frozenset()  # 0-based lines with ellipsis

    def to_text(self) -> str:
        rendered = []
        for source_text, comment in self.lines:
            rendered.append(f"{source_text} # {comment}" if comment else source_text)
        return "\n".join(rendered)


def _format_visit(event: TraceEvent) -> str:
    if not event.changed_vars:
        return f"step={event.step}"
    values = ", ".join(
        "{}={}".format(name, value.replace("\n", "\\n")) for name, value in event.changed_vars
    )
    return f"step={event.step}: {values}"


def render_trace(source: str, events: Sequence[TraceEvent]) -> AnnotatedProgram:
    """Attach per-line visit comments to ``source``.

    Each executed line gets one comment listing its visits in order,
    separated by "; ". Lines visited more than three times show the first
    visit, an ellipsis, and the last visit. Raises ValueError on events
    pointing outside the source.
    """
    src_lines = source.splitlines()
    visits: dict[int, list[TraceEvent]] = {}
    for event in events:
        if not 1 <= event.line_no <= len(src_lines):
            raise ValueError(
                f"trace event at line {event.line_no} is outside the {len(src_lines)}-line source"
            )
        visits.setdefault(event.line_no, []).append(event)

    lines: list[tuple[str, str]] = []
    marks: set[int] = set()
    for idx, text in enumerate(src_lines):
        line_events = visits.get(idx + 1, [])
        if not line_events:
            lines.append((text, ""))
            continue
        if len(line_events) > MAX_VISITS_SHOWN:
            parts = [_format_visit(line_events[0]), ELLIPSIS, _format_visit(line_events[-1])]
            marks.add(idx)
        else:
            parts = [_format_visit(ev) for ev in line_events]
        lines.append((text, "; ".join(parts)))
    return AnnotatedProgram(tuple(lines), frozenset(marks))


def _block(text: str) -> str:
    return text.rstrip("\n")


def render_io(io: IoCapture) -> str:
    """Labeled Input / Expected Output / Actual Output block for prompts.

    A timeout replaces the actual output with a notice; an exception appends
    its final "Name: message" line after whatever the program printed.
    """
    if io.exit_status.kind == EXIT_TIMEOUT:
        actual = TIMEOUT_NOTICE
    elif io.exit_status.kind == EXIT_EXCEPTION:
        error_line = f"{io.exit_status.name}: {io.exit_status.message}".rstrip(": ")
        printed = _block(io.actual_output)
        actual = f"{printed}\n{error_line}" if printed else error_line
    else:
        actual = _block(io.actual_output)
    return (
        "Input:\n"
        f"{_block(io.input)}\n"
        "Expected Output:\n"
        f"{_block(io.expected_output)}\n"
        "Actual Output:\n"
        f"{actual}"
    )
