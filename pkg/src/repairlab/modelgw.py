"""Pluggable repair-model gateway.

One interface fronts two backends: a remote chat-completion endpoint (JSON
request {model, messages, temperature, top_p, max_tokens}, API key from an
environment variable, retries with backoff, content-addressed response cache)
and a family of deterministic mocks used for desk-scale experiments and
tests. Every request/reply is appended to a JSONL session log that can be
replayed bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import requests

from . import tracefmt
from .corpus import RepairInstance
from .diffkit import DiffAnnotation, parse_code_diff
from .promptkit import (
    extract_code,
    first_fenced_block,
    render_repair,
    render_self_debug,
)
from .tracelink import TraceBundle

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "REPAIRLAB_API_KEY"
PERTURBATION_LINES = ("# repair helper note", "# repair helper note")


class GatewayError(RuntimeError):
    """Base failure talking to a repair model."""


class AuthError(GatewayError):
    pass


class RateLimitError(GatewayError):
    pass


class NetworkError(GatewayError):
    pass


@dataclass(frozen=True)
class Decoding:
    kind: str = "greedy"  # "greedy" | "sampled"
    temperature: float = 0.0
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.kind == "greedy" and self.temperature != 0.0:
            raise ValueError("greedy decoding requires temperature 0")

    @classmethod
    def greedy(cls) -> "Decoding":
        return cls("greedy", 0.0, 1.0)

    @classmethod
    def sampled(cls, top_p: float = 0.7, temperature: float = 1.0) -> "Decoding":
        return cls("sampled", temperature, top_p)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: float = 1.0


@dataclass(frozen=True)
class MockBehavior:
    """Deterministic canned behavior.

    kinds: "echo" returns the prompt; "perfect" returns the instance's known
    fix fenced; "perturbed" returns the fix with two gratuitous extra lines;
    "gold" returns the instance's gold annotation text; "script" replies from
    an explicit fingerprint-to-reply map.
    """

    kind: str = "echo"
    script: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelEndpoint:
    kind: str  # "remote" | "mock"
    model_name: str = "mock"
    base_url: str = ""
    decoding: Decoding = field(default_factory=Decoding.greedy)
    max_tokens: int = 2048
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mock: MockBehavior = field(default_factory=MockBehavior)
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_concurrency: int = 8

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "mock"):
            raise ValueError(f"unknown endpoint kind {self.kind!r}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("remote endpoints need a base_url")


def fingerprint(template_id: str, q: str, c: str, annotation_text: str = "") -> str:
    """Stable identity of one model request, for mock scripting and caching."""
    digest = hashlib.sha256()
    for part in (template_id, q, c, annotation_text):
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


class SessionLog:
    """Append-only JSONL of {fingerprint, prompt, reply, latency_ms}."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, fingerprint_: str, prompt: str, reply: str, latency_ms: float) -> None:
        record = {
            "fingerprint": fingerprint_,
            "prompt": prompt,
            "reply": reply,
            "latency_ms": round(latency_ms, 3),
        }
        line = json.dumps(record, ensure_ascii=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def load_session_script(path: str | os.PathLike) -> dict[str, str]:
    """Fingerprint-to-reply map recovered from a session log, for replay."""
    script: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                script[record["fingerprint"]] = record["reply"]
    return script


def replay_endpoint(path: str | os.PathLike) -> ModelEndpoint:
    """Mock endpoint that replays a recorded session bit-exactly."""
    return ModelEndpoint(kind="mock", mock=MockBehavior("script", load_session_script(path)))


class ResponseCache:
    """Content-addressed on-disk reply cache with atomic writes."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["reply"]

    def put(self, key: str, prompt: str, reply: str) -> None:
        path = self._path(key)
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps({"prompt": prompt, "reply": reply}), encoding="utf-8")
        os.replace(tmp, path)


class ModelGateway:
    """Front door for one endpoint: completions plus the two pipeline ops."""

    def __init__(
        self,
        endpoint: ModelEndpoint,
        *,
        cache_dir: str | os.PathLike | None = None,
        session_log: SessionLog | None = None,
        language: str = "Python",
    ):
        self.endpoint = endpoint
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.session_log = session_log
        self.language = language
        self._limiter = threading.BoundedSemaphore(endpoint.max_concurrency)

    # -- completions ---------------------------------------------------------

    def complete(
        self,
        prompt: str,
        *,
        request_fingerprint: str | None = None,
        context: Mapping[str, str] | None = None,
    ) -> str:
        fp = request_fingerprint or fingerprint("raw", prompt, "")
        started = time.monotonic()
        with self._limiter:
            if self.endpoint.kind == "mock":
                reply = self._mock_reply(prompt, fp, context or {})
            else:
                reply = self._remote_reply(prompt, fp)
        if self.session_log is not None:
            self.session_log.append(fp, prompt, reply, (time.monotonic() - started) * 1000.0)
        return reply

    def _mock_reply(self, prompt: str, fp: str, context: Mapping[str, str]) -> str:
        behavior = self.endpoint.mock
        if behavior.kind == "echo":
            return prompt
        if behavior.kind == "script":
            if fp not in behavior.script:
                raise GatewayError(f"no scripted reply for fingerprint {fp[:12]}")
            return behavior.script[fp]
        if behavior.kind == "perfect":
            fixed = context.get("fixed_code")
            if fixed is None:
                raise GatewayError("perfect mock needs the instance's fixed code in context")
            return f"```\n{fixed.rstrip()}\n```"
        if behavior.kind == "perturbed":
            fixed = context.get("fixed_code")
            if fixed is None:
                raise GatewayError("perturbed mock needs the instance's fixed code in context")
            padded = "\n".join(PERTURBATION_LINES) + "\n" + fixed.rstrip()
            return f"```\n{padded}\n```"
        if behavior.kind == "gold":
            label = context.get("diff_label")
            if label is None:
                raise GatewayError("gold mock needs the instance's diff label in context")
            return label
        raise GatewayError(f"unknown mock behavior {behavior.kind!r}")

    def _remote_reply(self, prompt: str, fp: str) -> str:
        cache_key = fingerprint("cache", self.endpoint.model_name, prompt, repr(self.endpoint.decoding))
        if self.cache is not None:
            cached = self.cache.get(cache_key)
            if cached is not None:
                return cached
        payload = {
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.endpoint.decoding.temperature,
            "top_p": self.endpoint.decoding.top_p,
            "max_tokens": self.endpoint.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.endpoint.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        retry = self.endpoint.retry
        last_error: GatewayError | None = None
        for attempt in range(retry.max_attempts):
            if attempt:
                delay = retry.backoff_seconds * (2 ** (attempt - 1))
                logger.warning(
                    "retrying model request %s (attempt %d/%d) after %.2fs",
                    fp[:12], attempt + 1, retry.max_attempts, delay,
                )
                time.sleep(delay)
            try:
                response = requests.post(
                    self.endpoint.base_url, json=payload, headers=headers, timeout=120
                )
            except requests.RequestException as exc:
                last_error = NetworkError(f"request failed: {exc}")
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"authentication rejected (HTTP {response.status_code})")
            if response.status_code == 429:
                last_error = RateLimitError("rate limited (HTTP 429)")
                continue
            if response.status_code >= 500:
                last_error = NetworkError(f"server error (HTTP {response.status_code})")
                continue
            if response.status_code != 200:
                raise GatewayError(f"unexpected HTTP {response.status_code}: {response.text[:200]}")
            try:
                reply = response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GatewayError(f"malformed completion response: {exc}") from exc
            if self.cache is not None:
                self.cache.put(cache_key, prompt, reply)
            return reply
        raise last_error or NetworkError("model request failed with no attempts made")

    # -- pipeline operations ---------------------------------------------------

    def _context(self, instance: RepairInstance) -> dict[str, str]:
        return {
            "buggy_code": instance.buggy_code,
            "fixed_code": instance.fixed_code,
            "diff_label": instance.diff_label.render(),
        }

    def locate(self, instance: RepairInstance, bundle: TraceBundle | None = None) -> DiffAnnotation | None:
        """Stage one: ask for a buggy-line annotation and parse the reply.

        Returns None (no localization) when the reply cannot be parsed.
        """
        if bundle is not None:
            io_text = tracefmt.render_io(bundle.io)
            trace_text = tracefmt.render_trace(instance.buggy_code, bundle.events).to_text()
        else:
            io_text = trace_text = None
        prompt = render_self_debug(
            instance.problem_statement, instance.buggy_code, io_text, trace_text, self.language
        )
        fp = fingerprint("self_debug", instance.problem_statement, instance.buggy_code)
        reply = self.complete(prompt, request_fingerprint=fp, context=self._context(instance))
        body = first_fenced_block(reply) or reply
        return parse_code_diff(body, instance.buggy_code)

    def repair(self, instance: RepairInstance, annotation: DiffAnnotation | None) -> str | None:
        """Stage two: ask for the corrected program and extract the code.

        Returns None when no code can be extracted from the reply.
        """
        prompt = render_repair(
            instance.problem_statement, instance.buggy_code, annotation, self.language
        )
        fp = fingerprint(
            "repair",
            instance.problem_statement,
            instance.buggy_code,
            annotation.render() if annotation is not None else "",
        )
        reply = self.complete(prompt, request_fingerprint=fp, context=self._context(instance))
        return extract_code(reply)


def complete(endpoint: ModelEndpoint, prompt: str) -> str:
    """One-off completion without cache or logging."""
    return ModelGateway(endpoint).complete(prompt)
