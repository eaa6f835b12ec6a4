"""Chat-completion client over an OpenAI-compatible HTTP endpoint or a mock.

Every prompt goes out as a single user message. The client bounds the number
of requests in flight, retries transient failures (HTTP 429/5xx, dropped
connections, timeouts) with capped exponential backoff and full jitter, and
optionally appends one JSON line per request to an audit file. The audit line
carries the prompt's SHA-256, usage and latency; it never carries the API key
or the prompt itself.

Mock backends report token usage with :func:`estimate_tokens`, and responses
flag such counts as estimated.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .errors import (
    AuthError,
    LLMError,
    MalformedResponse,
    RateLimitExhausted,
    RequestTimeout,
    ScriptMiss,
    TransientError,
)

__all__ = [
    "CLASSIFICATION_SAMPLING",
    "CONTAMINATION_SAMPLING",
    "ChatRequest",
    "ChatResponse",
    "EchoOracle",
    "HttpBackend",
    "LLMClient",
    "MockBackend",
    "Perturbing",
    "RequestRejected",
    "RequestTag",
    "Sampling",
    "Scripted",
    "estimate_tokens",
    "mock_backend",
]

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
API_KEY_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "OPENAI_BASE_URL"


class RequestRejected(LLMError):
    """Non-retryable 4xx other than authentication failures."""


def estimate_tokens(text: str) -> int:
    """Whitespace-delimited words plus newline characters."""
    return len(text.split()) + text.count("\n")


@dataclass(frozen=True)
class RequestTag:
    """Routing metadata that stays local; it is never put on the wire."""

    doc_id: str
    strategy: str
    depth: int | None = None

    @property
    def correlation_id(self) -> str:
        return f"{self.doc_id}#{self.strategy}#{self.depth if self.depth is not None else 'full'}"


@dataclass(frozen=True)
class ChatRequest:
    model: str
    prompt_text: str
    temperature: float = 1.0
    top_p: float = 1.0
    max_completion_tokens: int | None = None
    tag: RequestTag | None = None

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must lie in (0, 1], got {self.top_p}")
        if self.max_completion_tokens is not None and self.max_completion_tokens < 1:
            raise ValueError("max_completion_tokens must be positive")

    def to_payload(self) -> dict:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": self.prompt_text}],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        if self.max_completion_tokens is not None:
            payload["max_completion_tokens"] = self.max_completion_tokens
        return payload

    @property
    def prompt_sha256(self) -> str:
        return hashlib.sha256(self.prompt_text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Sampling:
    temperature: float = 1.0
    top_p: float = 1.0
    max_completion_tokens: int | None = None

    def request(self, model: str, prompt_text: str, tag: RequestTag | None = None) -> ChatRequest:
        return ChatRequest(
            model=model,
            prompt_text=prompt_text,
            temperature=self.temperature,
            top_p=self.top_p,
            max_completion_tokens=self.max_completion_tokens,
            tag=tag,
        )


CLASSIFICATION_SAMPLING = Sampling(temperature=1.0, top_p=1.0)
CONTAMINATION_SAMPLING = Sampling(temperature=0.0, top_p=1.0, max_completion_tokens=500)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    backend: str  # "http" or "mock"
    usage_estimated: bool = False
    correlation_id: str | None = None
    attempts: int = 1


class Backend(Protocol):
    name: str

    def send(self, request: ChatRequest) -> ChatResponse: ...


# --------------------------------------------------------------------------
# HTTP backend
# --------------------------------------------------------------------------
class HttpBackend:
    name = "http"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not api_key:
            raise AuthError(f"no API key configured (set {API_KEY_ENV})")
        self._http = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/chat/completions"

    def close(self) -> None:
        self._http.close()

    def send(self, request: ChatRequest) -> ChatResponse:
        start = time.perf_counter()
        try:
            resp = self._http.post(self.endpoint, json=request.to_payload())
        except httpx.TimeoutException as exc:
            raise RequestTimeout(f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {exc}") from exc
        latency = time.perf_counter() - start
        status = resp.status_code
        if status in (401, 403):
            raise AuthError(f"HTTP {status}: {_short(resp.text)}")
        if status == 408:
            raise RequestTimeout(f"HTTP 408: {_short(resp.text)}")
        if status == 429 or status >= 500:
            raise TransientError(f"HTTP {status}: {_short(resp.text)}", status=status)
        if status >= 400:
            raise RequestRejected(f"HTTP {status}: {_short(resp.text)}")
        try:
            body = resp.json()
            message = body["choices"][0]["message"]
            if not isinstance(message, dict):
                raise TypeError("message is not an object")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {_short(resp.text)}") from exc
        text = message.get("content")
        if text is None:
            text = message.get("refusal") or ""
        if not isinstance(text, str):
            raise MalformedResponse(f"completion content is not a string: {text!r}")
        usage = body.get("usage")
        if not isinstance(usage, dict):
            usage = {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        estimated = not (isinstance(prompt_tokens, int) and isinstance(completion_tokens, int))
        if estimated:
            prompt_tokens = estimate_tokens(request.prompt_text)
            completion_tokens = estimate_tokens(text)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            latency=latency,
            backend=self.name,
            usage_estimated=estimated,
        )


def _short(text: str, limit: int = 200) -> str:
    return text if len(text) <= limit else text[:limit] + "..."


# --------------------------------------------------------------------------
# Mock backend and reply rules
# --------------------------------------------------------------------------
Rule = Callable[[ChatRequest], str]


class EchoOracle:
    """Reply with the gold answer for the tagged document.

    DL gets the gold leaf name, DH the `` > ``-joined gold path, and a TMH
    step at depth ``d`` the gold label at that depth.
    """

    def __init__(self, answers: Mapping[str, Sequence[str]], separator: str = " > "):
        self.answers = {k: tuple(v) for k, v in answers.items()}
        self.separator = separator

    @classmethod
    def from_dataset(cls, dataset) -> "EchoOracle":
        t = dataset.taxonomy
        return cls({d.doc_id: t.names(d.gold_path(t)) for d in dataset.documents})

    def __call__(self, request: ChatRequest) -> str:
        tag = request.tag
        if tag is None or tag.doc_id not in self.answers:
            raise ScriptMiss("echo oracle has no gold answer for this request")
        names = self.answers[tag.doc_id]
        if tag.strategy == "DL":
            return names[-1]
        if tag.strategy == "DH":
            return self.separator.join(names)
        depth = tag.depth or len(names)
        return names[min(depth, len(names)) - 1]


class Scripted:
    """Fixed prompt -> reply map.

    A miss returns ``fallback``; with ``strict=True`` it raises ScriptMiss.
    """

    def __init__(self, replies: Mapping[str, str] | None = None, fallback: str = "", strict: bool = False):
        self.replies = dict(replies or {})
        self.fallback = fallback
        self.strict = strict

    def __call__(self, request: ChatRequest) -> str:
        try:
            return self.replies[request.prompt_text]
        except KeyError:
            if self.strict:
                raise ScriptMiss(f"no scripted reply for prompt {request.prompt_sha256[:12]}") from None
            return self.fallback


class Perturbing:
    """Corrupt the replies of another rule.

    ``typo`` deletes one character at an interior position drawn from
    ``random.Random(seed)`` (any position for strings shorter than 3).
    ``case`` swaps the case of every character. ``punct`` appends
    ``punctuation``.
    """

    CORRUPTIONS = ("typo", "case", "punct")

    def __init__(self, inner: Rule, corruption: str = "typo", seed: int = 0, punctuation: str = "."):
        if corruption not in self.CORRUPTIONS:
            raise ValueError(f"unknown corruption {corruption!r}; expected one of {self.CORRUPTIONS}")
        self.inner = inner
        self.corruption = corruption
        self.seed = seed
        self.punctuation = punctuation

    def corrupt(self, text: str) -> str:
        if self.corruption == "case":
            return text.swapcase()
        if self.corruption == "punct":
            return text + self.punctuation
        if not text:
            return text
        rng = random.Random(self.seed)
        pos = rng.randrange(1, len(text) - 1) if len(text) >= 3 else rng.randrange(len(text))
        return text[:pos] + text[pos + 1 :]

    def __call__(self, request: ChatRequest) -> str:
        return self.corrupt(self.inner(request))


class MockBackend:
    name = "mock"

    def __init__(self, rule: Rule, delay: float = 0.0):
        self.rule = rule
        self.delay = delay

    def send(self, request: ChatRequest) -> ChatResponse:
        text = self.rule(request)
        if self.delay:
            time.sleep(self.delay)
        return ChatResponse(
            text=text,
            prompt_tokens=estimate_tokens(request.prompt_text),
            completion_tokens=estimate_tokens(text),
            latency=0.0,
            backend=self.name,
            usage_estimated=True,
        )


def mock_backend(script, **kwargs) -> MockBackend:
    """Build a mock backend from a rule callable or a prompt -> reply mapping."""
    if isinstance(script, Mapping):
        script = Scripted(script, **kwargs)
        kwargs = {}
    return MockBackend(script, **kwargs)


# --------------------------------------------------------------------------
# Client
# --------------------------------------------------------------------------
@dataclass
class RetryPolicy:
    max_attempts: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 30.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    def delay(self, attempt: int, rng: random.Random) -> float:
        # full jitter over the capped exponential window
        return rng.uniform(0, min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))


@dataclass
class _Counters:
    requests: int = 0
    attempts: int = 0
    failures: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class LLMClient:
    """Thread-safe front end shared by all classification workers."""

    def __init__(
        self,
        backend: Backend,
        *,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 8,
        audit_path=None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self.backend = backend
        self.retry = retry or RetryPolicy()
        self.max_in_flight = max_in_flight
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._sleep = sleep
        self._rng = random.Random(jitter_seed)
        self._rng_lock = threading.Lock()
        self._seq = itertools.count(1)
        self.counters = _Counters()
        self._audit_lock = threading.Lock()
        self._audit = None
        if audit_path is not None:
            audit_path = Path(audit_path)
            audit_path.parent.mkdir(parents=True, exist_ok=True)
            self._audit = audit_path.open("a", encoding="utf-8")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        if self._audit is not None:
            self._audit.close()
            self._audit = None
        close = getattr(self.backend, "close", None)
        if close is not None:
            close()

    @property
    def request_count(self) -> int:
        return self.counters.requests

    def complete(self, request: ChatRequest) -> ChatResponse:
        correlation_id = request.tag.correlation_id if request.tag else f"req-{next(self._seq)}"
        last_error: LLMError | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            with self.counters.lock:
                self.counters.attempts += 1
            try:
                with self._slots:
                    response = self.backend.send(request)
            except LLMError as exc:
                if not exc.retryable:
                    self._record_failure(request, correlation_id, attempt, exc)
                    raise
                last_error = exc
                if attempt < self.retry.max_attempts:
                    with self._rng_lock:
                        pause = self.retry.delay(attempt, self._rng)
                    log.warning("attempt %d for %s failed (%s); retrying in %.2fs", attempt, correlation_id, exc, pause)
                    self._sleep(pause)
                continue
            response = replace(response, correlation_id=correlation_id, attempts=attempt)
            with self.counters.lock:
                self.counters.requests += 1
            self._write_audit(request, response, "ok")
            return response
        if isinstance(last_error, RequestTimeout):
            final: LLMError = RequestTimeout(f"{correlation_id}: timed out on all {self.retry.max_attempts} attempts")
        else:
            final = RateLimitExhausted(f"{correlation_id}: gave up after {self.retry.max_attempts} attempts: {last_error}")
        self._record_failure(request, correlation_id, self.retry.max_attempts, final)
        raise final from last_error

    def _record_failure(self, request, correlation_id, attempts, exc) -> None:
        with self.counters.lock:
            self.counters.failures += 1
        self._write_line(
            {
                "correlation_id": correlation_id,
                "status": "error",
                "error": type(exc).__name__,
                "message": str(exc),
                "model": request.model,
                "prompt_sha256": request.prompt_sha256,
                "backend": self.backend.name,
                "attempts": attempts,
            }
        )

    def _write_audit(self, request: ChatRequest, response: ChatResponse, status: str) -> None:
        self._write_line(
            {
                "correlation_id": response.correlation_id,
                "status": status,
                "model": request.model,
                "prompt_sha256": request.prompt_sha256,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "usage": "estimated" if response.usage_estimated else "api-reported",
                "latency_s": round(response.latency, 6),
                "backend": response.backend,
                "attempts": response.attempts,
            }
        )

    def _write_line(self, record: dict) -> None:
        if self._audit is None:
            return
        line = json.dumps(record, sort_keys=True)
        with self._audit_lock:
            self._audit.write(line + "\n")
            self._audit.flush()
