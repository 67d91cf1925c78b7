"""Run one standalone Python program under line-trace hooks.

The traced program reads stdin and writes stdout like a contest submission.
Every executed line yields one event carrying the variables whose rendered
value changed when the line ran; rendering drops function objects, elides the
middle of long one-dimensional sequences, and collapses multi-dimensional
arrays to a placeholder so the stream stays compact.
"""

from __future__ import annotations

import io
import os
import signal
import sys
import tempfile
import time
import types
from dataclasses import dataclass, field

from .schema import SCHEMA_VERSION

VALUE_CAP = 120
SEQUENCE_HEAD_TAIL = 2
SEQUENCE_LIMIT = 20
MULTIDIM_PLACEHOLDER = "..."

EXIT_OK = "ok"
EXIT_EXCEPTION = "exception"
EXIT_TIMEOUT = "timeout"


@dataclass(frozen=True)
class Limits:
    wall_seconds: float = 5.0
    max_events: int = 10000

    @classmethod
    def from_json(cls, doc: dict) -> "Limits":
        return cls(
            wall_seconds=float(doc.get("wall_seconds", 5.0)),
            max_events=int(doc.get("max_events", 10000)),
        )


@dataclass
class TraceResult:
    input: str
    expected_output: str
    actual_output: str = ""
    exit_kind: str = EXIT_OK
    exit_name: str = ""
    exit_message: str = ""
    events: list[dict] = field(default_factory=list)
    truncated: bool = False

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "io": {
                "input": self.input,
                "expected_output": self.expected_output,
                "actual_output": self.actual_output,
                "exit_status": {
                    "kind": self.exit_kind,
                    "name": self.exit_name,
                    "message": self.exit_message,
                },
            },
            "events": self.events,
            "truncated": self.truncated,
        }


class _TraceTimeout(BaseException):
    """Raised by the alarm handler; BaseException dodges `except Exception`
    in traced code."""


def render_value(value) -> str | None:
    """Textual form of one variable value, or None when it must be dropped.

    Callables and modules are dropped. Sequences nested in sequences (and
    array-likes with ndim > 1) render as a placeholder; one-dimensional
    sequences longer than 20 elements keep the first and last two values.
    All renderings are capped at 120 characters.
    """
    if callable(value) or isinstance(value, types.ModuleType):
        return None
    ndim = getattr(value, "ndim", None)
    if isinstance(ndim, int):
        if ndim > 1:
            return MULTIDIM_PLACEHOLDER
        if ndim == 1 and value.shape[0] > SEQUENCE_LIMIT:
            return _elide_sequence([repr(v) for v in value[:2]] + [repr(v) for v in value[-2:]], "[", "]")
    if isinstance(value, (list, tuple)):
        if any(isinstance(item, (list, tuple)) for item in value):
            return MULTIDIM_PLACEHOLDER
        if len(value) > SEQUENCE_LIMIT:
            parts = [repr(v) for v in value[:SEQUENCE_HEAD_TAIL]]
            parts += [repr(v) for v in value[-SEQUENCE_HEAD_TAIL:]]
            open_, close = ("[", "]") if isinstance(value, list) else ("(", ")")
            return _elide_sequence(parts, open_, close)
    try:
        text = repr(value)
    except Exception:
        text = f"<unrepresentable {type(value).__name__}>"
    # renderings must stay single-line: they end up in inline code comments
    text = text.replace("\r", "\\r").replace("\n", "\\n")
    if len(text) > VALUE_CAP:
        text = text[: VALUE_CAP - 3] + "..."
    return text


def _elide_sequence(head_tail: list[str], open_: str, close: str) -> str:
    head = head_tail[:SEQUENCE_HEAD_TAIL]
    tail = head_tail[SEQUENCE_HEAD_TAIL:]
    return open_ + ", ".join(head + ["..."] + tail) + close


def _visible_vars(frame) -> dict[str, str]:
    rendered: dict[str, str] = {}
    for name, value in frame.f_locals.items():
        if name.startswith("__"):
            continue
        text = render_value(value)
        if text is not None:
            rendered[name] = text
    return rendered


class _FrameState:
    __slots__ = ("pending_line", "snapshot")

    def __init__(self, snapshot: dict[str, str]):
        self.pending_line: int | None = None
        self.snapshot = snapshot


class _LineTracer:
    """Per-frame pending-line tracer.

    A line event for line L fires before L executes, so the event recorded
    for L is emitted when the frame's next event arrives, carrying the
    variables L changed.
    """

    def __init__(self, filename: str, limits: Limits):
        self.filename = filename
        self.limits = limits
        self.events: list[dict] = []
        self.step = 0
        self.truncated = False
        self.recording = limits.max_events > 0
        self.deadline = time.monotonic() + limits.wall_seconds
        self.stack: list[_FrameState] = []
        self.timed_out = False

    def global_trace(self, frame, event, arg):
        if frame.f_code.co_filename != self.filename or not self.recording:
            return None
        if event == "call":
            self.stack.append(_FrameState(_visible_vars(frame)))
            return self.local_trace
        return None

    def local_trace(self, frame, event, arg):
        if self.timed_out or time.monotonic() > self.deadline:
            self.timed_out = True
            raise _TraceTimeout()
        if not self.recording:
            return None
        if not self.stack:
            return None
        state = self.stack[-1]
        if event == "line":
            self._flush(frame, state)
            state.pending_line = frame.f_lineno
        elif event == "return":
            self._flush(frame, state)
            self.stack.pop()
        return self.local_trace

    def _flush(self, frame, state: _FrameState) -> None:
        if state.pending_line is None:
            return
        current = _visible_vars(frame)
        changed = {
            name: value
            for name, value in current.items()
            if state.snapshot.get(name) != value
        }
        state.snapshot = current
        line = state.pending_line
        state.pending_line = None
        self._emit(line, changed)

    def _emit(self, line: int, changed: dict[str, str]) -> None:
        if len(self.events) >= self.limits.max_events:
            self.truncated = True
            self.recording = False
            return
        self.step += 1
        self.events.append({"step": self.step, "line": line, "vars": changed})


def _final_traced_line(tb, filename: str) -> int | None:
    line = None
    while tb is not None:
        if tb.tb_frame.f_code.co_filename == filename:
            line = tb.tb_lineno
        tb = tb.tb_next
    return line


def trace_run(source: str, input_text: str, expected_output: str, limits: Limits = Limits()) -> TraceResult:
    """Execute ``source`` on ``input_text`` and capture output plus events.

    The program runs in this process inside a fresh scratch working
    directory, with stdin/stdout redirected. A wall-clock alarm plus a
    per-event deadline enforce the time limit; the event stream stops at
    ``max_events`` with the truncation flag set while the program runs on.
    """
    result = TraceResult(input=input_text, expected_output=expected_output)
    filename = "<traced-program>"
    try:
        code = compile(source, filename, "exec")
    except SyntaxError as exc:
        result.exit_kind = EXIT_EXCEPTION
        result.exit_name = type(exc).__name__
        result.exit_message = str(exc)
        return result

    tracer = _LineTracer(filename, limits)
    stdout_buffer = io.StringIO()
    env = {"__name__": "__main__", "__file__": filename, "__builtins__": __builtins__}

    old_stdin, old_stdout = sys.stdin, sys.stdout
    old_cwd = os.getcwd()
    use_alarm = hasattr(signal, "SIGALRM")
    old_handler = None
    alarm_armed = [False]
    if use_alarm:
        # the handler raises only while armed; a late alarm during cleanup
        # must not blow up the tracer itself
        def _on_alarm(signum, frame):
            tracer.timed_out = True
            if alarm_armed[0]:
                raise _TraceTimeout()

        old_handler = signal.signal(signal.SIGALRM, _on_alarm)
        alarm_armed[0] = True
        signal.setitimer(signal.ITIMER_REAL, max(limits.wall_seconds, 0.01))

    scratch = tempfile.mkdtemp(prefix="tracekit-")
    try:
        os.chdir(scratch)
        sys.stdin = io.StringIO(input_text)
        sys.stdout = stdout_buffer
        if tracer.recording:
            sys.settrace(tracer.global_trace)
        try:
            try:
                exec(code, env)
                result.exit_kind = EXIT_OK
            except _TraceTimeout:
                result.exit_kind = EXIT_TIMEOUT
            except SystemExit as exc:
                code_val = exc.code if exc.code is not None else 0
                if code_val in (0, None):
                    result.exit_kind = EXIT_OK
                else:
                    result.exit_kind = EXIT_EXCEPTION
                    result.exit_name = "SystemExit"
                    result.exit_message = str(code_val)
            except BaseException as exc:  # noqa: BLE001 - traced-program crash, not ours
                result.exit_kind = EXIT_EXCEPTION
                result.exit_name = type(exc).__name__
                result.exit_message = str(exc)
                line = _final_traced_line(exc.__traceback__, filename)
                if line is not None and (not tracer.events or tracer.events[-1]["line"] != line):
                    tracer._emit(line, {})
            finally:
                alarm_armed[0] = False
                sys.settrace(None)
        except _TraceTimeout:
            # alarm landed between the traced region and disarming
            result.exit_kind = EXIT_TIMEOUT
            sys.settrace(None)
    finally:
        alarm_armed[0] = False
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, old_handler)
        sys.stdin, sys.stdout = old_stdin, old_stdout
        os.chdir(old_cwd)
        _cleanup_scratch(scratch)

    result.actual_output = stdout_buffer.getvalue().replace("\r\n", "\n")
    result.events = tracer.events
    result.truncated = tracer.truncated
    return result


def _cleanup_scratch(path: str) -> None:
    import shutil

    shutil.rmtree(path, ignore_errors=True)


def normalize_output(text: str) -> str:
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def self_check(source: str, input_text: str, expected_output: str, limits: Limits = Limits()) -> bool:
    """Pass/fail verdict for one program on one test, without event capture.

    Pass means the run finished cleanly and the output matches the expected
    text ignoring per-line trailing whitespace and the final newline.
    """
    result = trace_run(source, input_text, expected_output, Limits(limits.wall_seconds, 0))
    if result.exit_kind != EXIT_OK:
        return False
    return normalize_output(result.actual_output) == normalize_output(expected_output)
