"""Prompt construction for both repair stages plus reply parsing.

Rendered prompts are an external contract: the exact texts are frozen as
golden fixtures under tests/fixtures/prompts and must not drift. Code slots
are fenced so that replies which quote the prompt still parse.
"""

from __future__ import annotations

import re
from typing import Sequence

from .diffkit import DiffAnnotation, normalize_lines

TEMPLATE_IDS = ("self_debug", "repair", "instruction", "cot", "few_shot")
TRACE_UNAVAILABLE = "(execution information unavailable)"

_INSTRUCTION_BODY = (
    "Given a programming question and a corresponding piece of buggy code written in "
    "{language}, please correct the code by modifying the provided buggy code."
)
_SELF_DEBUG_BODY = (
    "Given a programming question and a corresponding piece of buggy code written in "
    "{language}, please provide a program repair proposal for the buggy code. "
    "Use '-' to represent the line that may need to be deleted or modified."
)
_REPAIR_BODY = (
    "Given a programming question, a piece of buggy code written in {language}, and a "
    "code diff annotation of the buggy code in which a leading '-' marks a line that "
    "may need to be deleted or modified, please fix the buggy code. Make precise fixes "
    "focused on the marked lines and keep the rest of the code unchanged. Output the "
    "complete corrected program."
)


def _fence(code: str) -> str:
    return f"```\n{code.rstrip()}\n```"


def _task_sections(q: str, c: str) -> str:
    return f"Programming Task:\n{q}\n\nBuggy Code:\n{_fence(c)}\n"


def render_instruction(q: str, c: str, language: str = "Python") -> str:
    body = _INSTRUCTION_BODY.format(language=language)
    return f"Instruction: {body}\n\n{_task_sections(q, c)}"


def render_cot(q: str, c: str, language: str = "Python") -> str:
    body = _INSTRUCTION_BODY.format(language=language)
    return f"Instruction: {body} Let's think step by step.\n\n{_task_sections(q, c)}"


def render_few_shot(
    q: str,
    c: str,
    examples: Sequence[tuple[str, str, str]],
    language: str = "Python",
) -> str:
    """Two worked examples (task, buggy code, corrected code) then the task."""
    if len(examples) != 2:
        raise ValueError(f"few-shot prompting takes exactly 2 examples, got {len(examples)}")
    body = _INSTRUCTION_BODY.format(language=language)
    parts = [f"Instruction: {body} Here are examples of program repair:\n"]
    for idx, (eq, ec, ey) in enumerate(examples, start=1):
        parts.append(
            f"Example {idx}:\n"
            f"Programming Task:\n{eq}\n\n"
            f"Buggy Code:\n{_fence(ec)}\n\n"
            f"Corrected Code:\n{_fence(ey)}\n"
        )
    parts.append(_task_sections(q, c))
    return "\n".join(parts)


def render_baseline(
    kind: str,
    q: str,
    c: str,
    examples: Sequence[tuple[str, str, str]] | None = None,
    language: str = "Python",
) -> str:
    if kind == "instruction":
        return render_instruction(q, c, language)
    if kind == "cot":
        return render_cot(q, c, language)
    if kind == "few_shot":
        return render_few_shot(q, c, examples or (), language)
    raise ValueError(f"unknown baseline template {kind!r}")


def render_self_debug(
    q: str,
    c: str,
    io_text: str | None,
    trace_text: str | None,
    language: str = "Python",
) -> str:
    """Stage-one prompt: task, buggy code, then execution information.

    ``io_text`` and ``trace_text`` come from tracefmt; pass None (or empty)
    when tracing failed and the section is filled with an unavailability
    sentinel instead of aborting the instance.
    """
    body = _SELF_DEBUG_BODY.format(language=language)
    io_part = io_text if io_text else TRACE_UNAVAILABLE
    trace_part = _fence(trace_text) if trace_text else TRACE_UNAVAILABLE
    return (
        f"Instruction: {body}\n"
        "\n"
        f"{_task_sections(q, c)}"
        "\n"
        "Execution Information of Failed Test Case:\n"
        "I/O data:\n"
        f"{io_part}\n"
        "\n"
        "Program Trace Information:\n"
        f"{trace_part}\n"
    )


def render_repair(
    q: str,
    c: str,
    annotation: DiffAnnotation | None,
    language: str = "Python",
) -> str:
    """Stage-two prompt built around the buggy-line annotation.

    With no usable annotation (stage one failed to localize) the prompt
    degrades to plain instruction-style repair. Raises ValueError when the
    annotation does not line up with the code.
    """
    if annotation is None:
        return render_instruction(q, c, language)
    if [text for _, text in annotation.lines] != normalize_lines(c):
        raise ValueError("annotation is not aligned with the buggy code")
    body = _REPAIR_BODY.format(language=language)
    return (
        f"Instruction: {body}\n"
        "\n"
        f"{_task_sections(q, c)}"
        "\n"
        "Code Diff:\n"
        f"{_fence(annotation.render())}\n"
    )


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:\n)?```", re.DOTALL)


def first_fenced_block(text: str) -> str | None:
    match = _FENCE_RE.search(text)
    return match.group(1) if match else None


def _is_prose(line: str) -> bool:
    s = line.strip()
    if not s:
        return False
    if any(ch in s for ch in "=(){}[]:;"):
        return False
    return len(s.split()) >= 3


_CODE_KEYWORDS = {
    "def", "class", "import", "from", "return", "if", "elif", "else", "for",
    "while", "try", "except", "with", "print", "pass", "break", "continue",
}


def _is_strong_code(line: str) -> bool:
    s = line.strip()
    if not s:
        return False
    if any(ch in s for ch in "=({["):
        return True
    first = s.split()[0].rstrip(":")
    return first in _CODE_KEYWORDS or s.endswith(":")


def extract_code(reply: str) -> str | None:
    """Pull candidate code out of a model reply.

    The first fenced block wins; otherwise the longest contiguous run of
    code-looking lines. Returns None when the reply contains nothing usable.
    """
    if not reply or not reply.strip():
        return None
    block = first_fenced_block(reply)
    if block is not None:
        return block if block.strip() else None

    lines = reply.splitlines()
    runs: list[tuple[int, int]] = []
    start = None
    for idx, line in enumerate(lines):
        if _is_prose(line):
            if start is not None:
                runs.append((start, idx))
                start = None
        elif start is None:
            start = idx
    if start is not None:
        runs.append((start, len(lines)))

    best: list[str] | None = None
    for lo, hi in runs:
        chunk = lines[lo:hi]
        while chunk and not chunk[0].strip():
            chunk = chunk[1:]
        while chunk and not chunk[-1].strip():
            chunk = chunk[:-1]
        if not chunk or not any(_is_strong_code(line) for line in chunk):
            continue
        if best is None or len(chunk) > len(best):
            best = chunk
    return "\n".join(best) if best else None
