"""Line diffs, buggy-line annotations, and the consistency metric.

The annotation format marks each line of a buggy program with a one-character
prefix: ``-`` for a line that should be deleted or modified, a single space
for a line that should be kept. The consistency metric scores how much of the
original program survives a repair, as preserved lines over the line count of
the repaired program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

KEEP = "keep"
BUGGY = "buggy"

_OP_KEEP = "keep"
_OP_DELETE = "delete"
_OP_INSERT = "insert"


def normalize_lines(text: str) -> list[str]:
    """Split text into lines with CRLF normalized and trailing whitespace removed.

    A trailing newline terminates the last line rather than opening an empty
    one, so ``"a\\n"`` and ``"a"`` both have exactly one line.
    """
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return [line.rstrip() for line in text.splitlines()]


@dataclass(frozen=True)
class DiffOp:
    """One step of a line-level edit script."""

    kind: str  # "keep" | "delete" | "insert"
    line: str


@dataclass(frozen=True)
class LineDiff:
    """Minimal line-level edit script turning one program into another.

    ``deleted`` counts buggy lines that were deleted or changed; ``inserted``
    counts fixed lines that were added or changed. A changed line contributes
    one delete plus one insert.
    """

    ops: tuple[DiffOp, ...]

    @property
    def deleted(self) -> int:
        return sum(1 for op in self.ops if op.kind == _OP_DELETE)

    @property
    def inserted(self) -> int:
        return sum(1 for op in self.ops if op.kind == _OP_INSERT)

    @property
    def kept(self) -> int:
        return sum(1 for op in self.ops if op.kind == _OP_KEEP)

    def replay(self) -> list[str]:
        """Apply the script, producing the fixed line sequence."""
        return [op.line for op in self.ops if op.kind != _OP_DELETE]


def _lcs_pairs(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """Matched index pairs of a longest common subsequence of ``a`` and ``b``.

    Prefers the earliest possible match for every pair, which makes the
    alignment deterministic when several longest subsequences exist.
    """
    n, m = len(a), len(b)
    lcs = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = lcs[i], lcs[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = nxt[j] if nxt[j] >= row[j + 1] else row[j + 1]
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif lcs[i + 1][j] >= lcs[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def line_diff(buggy: str, fixed: str) -> LineDiff:
    """Minimal line-level edit script from ``buggy`` to ``fixed``.

    Lines are compared after CRLF normalization and trailing-whitespace
    stripping; no other normalization is applied. Deterministic: ties between
    equally short scripts are broken by matching lines as early as possible
    and emitting deletes before inserts.
    """
    a = normalize_lines(buggy)
    b = normalize_lines(fixed)
    ops: list[DiffOp] = []
    i = j = 0
    for pi, pj in _lcs_pairs(a, b):
        while i < pi:
            ops.append(DiffOp(_OP_DELETE, a[i]))
            i += 1
        while j < pj:
            ops.append(DiffOp(_OP_INSERT, b[j]))
            j += 1
        ops.append(DiffOp(_OP_KEEP, a[i]))
        i += 1
        j += 1
    ops.extend(DiffOp(_OP_DELETE, line) for line in a[i:])
    ops.extend(DiffOp(_OP_INSERT, line) for line in b[j:])
    return LineDiff(tuple(ops))


@dataclass(frozen=True)
class DiffAnnotation:
    """A buggy program with one marker per line: ``keep`` or ``buggy``.

    ``valid`` is False when the annotation was recovered from malformed text
    by best-effort alignment rather than parsed exactly.
    """

    lines: tuple[tuple[str, str], ...]  # (marker, text)
    valid: bool = field(default=True, compare=False)

    @property
    def buggy_indices(self) -> frozenset[int]:
        """0-based indices of lines marked buggy."""
        return frozenset(i for i, (marker, _) in enumerate(self.lines) if marker == BUGGY)

    def render(self) -> str:
        """Annotation text: ``-`` prefix for buggy lines, one space otherwise."""
        return "\n".join(("-" if marker == BUGGY else " ") + text for marker, text in self.lines)


def encode_code_diff(buggy: str, diff: LineDiff) -> DiffAnnotation:
    """Turn an edit script into a per-line annotation of the buggy program.

    Every buggy line appears exactly once: deleted lines are marked buggy,
    kept lines keep. Inserted lines are dropped. Raises ValueError when the
    script does not cover the buggy program line for line.
    """
    src = normalize_lines(buggy)
    entries: list[tuple[str, str]] = []
    for op in diff.ops:
        if op.kind == _OP_INSERT:
            continue
        entries.append((BUGGY if op.kind == _OP_DELETE else KEEP, op.line))
    if len(entries) != len(src) or any(text != line for (_, text), line in zip(entries, src)):
        raise ValueError("edit script does not match the buggy code line for line")
    return DiffAnnotation(tuple(entries))


def annotate(buggy: str, fixed: str) -> DiffAnnotation:
    """Convenience: diff two programs and encode the buggy-side annotation."""
    return encode_code_diff(buggy, line_diff(buggy, fixed))


def parse_code_diff(text: str, buggy: str) -> DiffAnnotation | None:
    """Read an annotation emitted by a model back into markers for ``buggy``.

    Lines are matched positionally after removing the one-character prefix.
    Exact matches yield a valid annotation; extra blank lines are tolerated.
    Otherwise the result is a best-effort alignment by exact line text with
    ``valid=False``. Returns None when nothing aligns (unparseable reply).
    """
    src = normalize_lines(buggy)
    parsed: list[tuple[str, str]] = []
    for raw in normalize_lines(text):
        if raw.startswith("-"):
            parsed.append((BUGGY, raw[1:]))
        elif raw.startswith(" "):
            parsed.append((KEEP, raw[1:]))
        else:
            parsed.append((KEEP, raw))
    if not src:
        return DiffAnnotation(()) if not parsed else None
    if len(parsed) == len(src) and all(text == line for (_, text), line in zip(parsed, src)):
        return DiffAnnotation(tuple(parsed))

    bodies = [text for _, text in parsed]
    pairs = _lcs_pairs(bodies, src)
    markers = [KEEP] * len(src)
    matched_src: set[int] = set()
    matched_parsed: set[int] = set()
    for pi, si in pairs:
        markers[si] = parsed[pi][0]
        matched_src.add(si)
        matched_parsed.add(pi)
    src_has_content = any(line.strip() for line in src)
    matched_content = any(src[si].strip() for si in matched_src)
    if src_has_content and not matched_content:
        return None
    extras_blank = all(
        not bodies[pi].strip() for pi in range(len(bodies)) if pi not in matched_parsed
    )
    valid = len(matched_src) == len(src) and extras_blank
    return DiffAnnotation(tuple(zip(markers, src)), valid=valid)


def _diff_consistency(buggy: str, fixed: str, diff: LineDiff) -> float:
    fixed_lines = normalize_lines(fixed)
    if not fixed_lines:
        logger.warning("consistency of an empty repaired program is defined as 0")
        return 0.0
    k = len(normalize_lines(buggy))
    a, b = diff.deleted, diff.inserted
    denominator = k + (b - a)
    assert denominator == len(fixed_lines), "diff does not account for the repaired line count"
    score = (k - a) / denominator
    assert 0.0 <= score <= 1.0
    return score


def consistency(buggy: str, fixed: str) -> float:
    """Preserved buggy lines over the repaired program's line count, in [0, 1].

    With k buggy lines, a deleted-or-changed and b added-or-changed lines,
    the score is (k - a) / (k + (b - a)); the denominator equals the repaired
    program's line count.
    """
    return _diff_consistency(buggy, fixed, line_diff(buggy, fixed))


def consistency_reported(buggy: str, fixed: str) -> float:
    """Consistency as reported in evaluations: verbatim copies score 0.

    A model that returns the program unchanged made no repair, so the score
    is 0 rather than 1.
    """
    diff = line_diff(buggy, fixed)
    if diff.deleted == 0 and diff.inserted == 0:
        return 0.0
    return _diff_consistency(buggy, fixed, diff)
