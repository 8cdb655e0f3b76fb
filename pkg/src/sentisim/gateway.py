"""Chat-completion gateway with deterministic mock backends.

All calls go through :class:`Gateway`, which enforces a permit budget on
in-flight requests, retries transient HTTP failures with full-jitter
exponential backoff and optionally caches completions on disk.

Mock backends read what they need from ``ChatRequest.metadata``:

``task``
    ``"replication"``, ``"sentiment"`` or ``"self_check"``
``truth``
    1-based ground-truth category
``labels``
    the scale labels (sentiment task)
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import random
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from .errors import AuthError, BackendError, ConfigError, MalformedResponse
from .profiles import SENTIMENT_LABELS

ROLES = ("system", "user", "assistant")
BACKEND_KINDS = ("http", "mock_echo_truth", "mock_fixed", "mock_scripted", "mock_noisy")
RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}
MOCK_REASON = "It fits how a person with this background usually sees such issues."


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    model_id: str = "mock"
    temperature: float = 0.7
    max_tokens: int = 512
    seed: int | None = None
    trial_index: int = 0
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        msgs = tuple((str(role), str(text)) for role, text in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ConfigError("chat request needs at least one message")
        if msgs[0][0] not in ("system", "user"):
            raise ConfigError("first message must be a system or user message")
        bad = [role for role, _ in msgs if role not in ROLES]
        if bad:
            raise ConfigError(f"unknown role {bad[0]!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str
    latency: float  # milliseconds
    attempt_count: int
    cached: bool = False


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock_echo_truth"
    endpoint_url: str | None = None
    auth_token_env: str | None = None
    model_id: str = "mock"
    temperature: float = 0.7
    max_tokens: int = 512
    seed: int | None = None
    max_concurrency: int = 4
    max_retries: int = 3
    backoff_base: float = 500.0  # milliseconds
    timeout: float = 60.0  # seconds
    cache_dir: str | None = None
    fixed_reply: str = "Neutral"
    shift_prob: float = 0.0
    mock_seed: int = 0
    script: Sequence[str] | Callable[[ChatRequest], str] = ()

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise ConfigError("http backend requires endpoint_url")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if not 0 <= self.shift_prob <= 1:
            raise ConfigError("shift_prob must be in [0, 1]")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> BackendConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown backend option(s): {sorted(extra)}")
        data = dict(data)
        if isinstance(data.get("script"), list):
            data["script"] = tuple(str(s) for s in data["script"])
        return cls(**data)


def _canonical_text(text: str) -> str:
    return unicodedata.normalize("NFC", text.replace("\r\n", "\n"))


def cache_key(req: ChatRequest, trial_index: int | None = None) -> str:
    """SHA-256 over the canonical request fields that affect sampling."""
    payload = {
        "messages": [[role, _canonical_text(text)] for role, text in req.messages],
        "model_id": req.model_id,
        "temperature": float(req.temperature),
        "seed": req.seed,
        "trial_index": req.trial_index if trial_index is None else trial_index,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def noisy_category(truth: int, seed: int, shift_prob: float, n_points: int) -> int:
    """Keep ``truth`` with probability 1 - shift_prob, else move one step (inward at the ends)."""
    if not 1 <= truth <= n_points:
        raise ValueError(f"truth {truth} outside 1..{n_points}")
    rng = random.Random(seed)
    if rng.random() >= shift_prob:
        return truth
    step = -1 if rng.random() < 0.5 else 1
    if truth == 1:
        step = 1
    elif truth == n_points:
        step = -1
    return truth + step


def mock_noisy(truth_label: str, seed: int, shift_prob: float, labels: Sequence[str] = SENTIMENT_LABELS) -> str:
    index = [lab.casefold() for lab in labels].index(truth_label.casefold()) + 1
    return labels[noisy_category(index, seed, shift_prob, len(labels)) - 1]


def format_reply(task: str, value: int | str, labels: Sequence[str] = ()) -> str:
    """Render a well-formed reply for ``task`` the way a compliant model would."""
    if task == "self_check":
        return str(value)
    if task == "sentiment":
        label = labels[value - 1] if isinstance(value, int) else value
        return f"Sentiment: {label}\nReason: {MOCK_REASON}"
    return f"Answer: {value}"


def _request_seed(base: int, key: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{base}:{key}".encode()).digest()[:8], "big")


class _Retry(Exception):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class Gateway:
    """Thread-safe front door to one configured backend."""

    def __init__(self, cfg: BackendConfig, sleep: Callable[[float], None] = time.sleep,
                 transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self._sleep = sleep
        self._permits = threading.BoundedSemaphore(cfg.max_concurrency)
        self._lock = threading.Lock()
        self._jitter = random.Random()
        self.in_flight = 0
        self.max_in_flight = 0
        self.calls = 0
        self.cache_hits = 0
        self._script_pos = 0
        self._client = None
        if cfg.kind == "http":
            self._client = httpx.Client(timeout=cfg.timeout, transport=transport)
        self._cache_dir = Path(cfg.cache_dir) if cfg.cache_dir else None
        if self._cache_dir:
            self._cache_dir.mkdir(parents=True, exist_ok=True)

    def close(self):
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- public ------------------------------------------------------------

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        cached = self._cache_get(key)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return ChatResponse(cached["text"], cached.get("finish_reason", "stop"), 0.0, 1, cached=True)

        started = time.perf_counter()
        last_status = None
        attempts = 0
        for attempt in range(self.cfg.max_retries + 1):
            attempts += 1
            try:
                with self._permit():
                    text, finish = self._dispatch(req, key)
            except _Retry as exc:
                last_status = exc.status
                if attempt == self.cfg.max_retries:
                    raise BackendError(
                        f"backend failed after {attempts} attempt(s): {exc}", status=last_status
                    ) from None
                self._sleep(self._jitter.uniform(0, self.cfg.backoff_base * 2**attempt) / 1000.0)
                continue
            response = ChatResponse(text, finish, (time.perf_counter() - started) * 1000.0, attempts)
            self._cache_put(key, req, response)
            return response
        raise AssertionError("unreachable")

    # -- internals -----------------------------------------------------------

    @contextlib.contextmanager
    def _permit(self):
        self._permits.acquire()
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            yield
        finally:
            with self._lock:
                self.in_flight -= 1
            self._permits.release()

    def _dispatch(self, req: ChatRequest, key: str) -> tuple[str, str]:
        kind = self.cfg.kind
        if kind == "http":
            return self._http(req)
        meta = req.metadata
        task = meta.get("task", "sentiment")
        labels = tuple(meta.get("labels") or SENTIMENT_LABELS)
        if kind == "mock_scripted":
            return self._scripted(req), "stop"
        if task == "self_check":
            return "Yes", "stop"
        if kind == "mock_fixed":
            return format_reply(task, self.cfg.fixed_reply), "stop"
        truth = meta.get("truth")
        if truth is None:
            raise BackendError(f"{kind} backend needs a ground-truth category in request metadata")
        if kind == "mock_noisy":
            n_points = int(meta.get("n_points") or len(labels))
            truth = noisy_category(int(truth), _request_seed(self.cfg.mock_seed, key), self.cfg.shift_prob, n_points)
        return format_reply(task, int(truth), labels), "stop"

    def _scripted(self, req: ChatRequest) -> str:
        script = self.cfg.script
        if callable(script):
            return script(req)
        if not script:
            raise BackendError("mock_scripted backend has an empty script")
        with self._lock:
            pos = min(self._script_pos, len(script) - 1)
            self._script_pos += 1
        return script[pos]

    def _http(self, req: ChatRequest) -> tuple[str, str]:
        body = {
            "model": req.model_id,
            "messages": [{"role": role, "content": text} for role, text in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        headers = {"Content-Type": "application/json"}
        if self.cfg.auth_token_env:
            token = os.environ.get(self.cfg.auth_token_env)
            if not token:
                raise AuthError(f"environment variable {self.cfg.auth_token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        url = self.cfg.endpoint_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=body, headers=headers)
        except httpx.TransportError as exc:
            raise _Retry(f"transport error: {exc}") from None
        if resp.status_code in (401, 403):
            raise AuthError(f"authorization failed (HTTP {resp.status_code})", status=resp.status_code)
        if resp.status_code in RETRYABLE_STATUS:
            raise _Retry(f"HTTP {resp.status_code}", status=resp.status_code)
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
        try:
            choice = resp.json()["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponse("malformed chat-completions response", status=resp.status_code) from None
        if not isinstance(text, str):
            raise MalformedResponse("completion content is not text", status=resp.status_code)
        return text, str(choice.get("finish_reason") or "stop")

    def _cache_get(self, key: str):
        if not self._cache_dir:
            return None
        path = self._cache_dir / f"{key}.json"
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return None

    def _cache_put(self, key: str, req: ChatRequest, response: ChatResponse) -> None:
        if not self._cache_dir:
            return
        entry = {
            "key": key,
            "request": {
                "messages": [list(m) for m in req.messages],
                "model_id": req.model_id,
                "temperature": req.temperature,
                "seed": req.seed,
                "trial_index": req.trial_index,
            },
            "text": response.text,
            "finish_reason": response.finish_reason,
        }
        tmp = self._cache_dir / f".{key}.{threading.get_ident()}.tmp"
        tmp.write_text(json.dumps(entry, ensure_ascii=False, indent=1), encoding="utf-8")
        os.replace(tmp, self._cache_dir / f"{key}.json")


def complete(req: ChatRequest, cfg: BackendConfig | Gateway) -> ChatResponse:
    """One-shot convenience wrapper; reuse a Gateway for anything beyond a single call."""
    if isinstance(cfg, Gateway):
        return cfg.complete(req)
    with Gateway(cfg) as gw:
        return gw.complete(req)
