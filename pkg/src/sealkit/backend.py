"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted stand-in."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from .errors import (
    BackendExhaustedError,
    BadResponseError,
    ConfigError,
    PreconditionError,
    ScriptExhaustedError,
    ScriptMissError,
)

log = logging.getLogger(__name__)

RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass
class BackendConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    max_retries: int = 3
    request_timeout: float = 60.0
    parallelism: int = 1
    api_key_env: str = "LLM_API_KEY"
    requests_per_second: float | None = None
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    # Path to a scripted-response file; when set no HTTP traffic happens.
    script: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def snapshot(self) -> dict[str, Any]:
        """Manifest-safe view; holds the env var name, never its value."""
        return asdict(self)


@dataclass
class CompletionRecord:
    prompt: str
    response: str
    latency: float
    attempt_count: int
    backend_id: str


class Backend(Protocol):
    backend_id: str

    def complete(self, prompt: str) -> CompletionRecord: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class AuditLog:
    """Append-only ``completions.jsonl``: prompt hash, latency, attempts."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, rec: CompletionRecord) -> None:
        entry = {
            "prompt_sha256": prompt_hash(rec.prompt),
            "response_sha256": prompt_hash(rec.response),
            "latency": round(rec.latency, 6),
            "attempts": rec.attempt_count,
            "backend": rec.backend_id,
        }
        line = json.dumps(entry, sort_keys=True) + "\n"
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line)


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


def _check_prompt(prompt: str) -> None:
    if not isinstance(prompt, str) or not prompt.strip():
        raise PreconditionError("prompt must be non-empty", code="EMPTY_PROMPT")


class HTTPBackend:
    """Single-turn chat completions against an OpenAI-compatible endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        audit: AuditLog | None = None,
    ):
        self.config = config
        self.backend_id = f"http:{config.model_name}"
        self._client = httpx.Client(timeout=config.request_timeout, transport=transport)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()
        self._bucket = TokenBucket(config.requests_per_second, sleep=sleep) if config.requests_per_second else None
        self.audit = audit

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _backoff(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = self._rng.uniform(0, 1)
        return self.config.backoff_base * self.config.backoff_factor ** (attempt - 1) * (0.5 + jitter / 2)

    def complete(self, prompt: str) -> CompletionRecord:
        _check_prompt(prompt)
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        started = time.monotonic()
        last_error = ""
        for attempt in range(1, self.config.max_retries + 2):
            if self._bucket:
                self._bucket.acquire()
            try:
                resp = self._client.post(self.config.endpoint_url, json=body, headers=self._headers())
            except httpx.TransportError as exc:
                last_error = type(exc).__name__
            else:
                if resp.status_code in RETRY_STATUS:
                    last_error = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise BadResponseError(f"HTTP {resp.status_code}")
                else:
                    rec = CompletionRecord(
                        prompt, _content(resp), time.monotonic() - started, attempt, self.backend_id
                    )
                    if self.audit:
                        self.audit.record(rec)
                    return rec
            if attempt <= self.config.max_retries:
                delay = self._backoff(attempt)
                log.info("retrying after %s (attempt %d, sleep %.2fs)", last_error, attempt, delay)
                self._sleep(delay)
        raise BackendExhaustedError(f"gave up after {self.config.max_retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


def _content(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise BadResponseError("response lacks choices[0].message.content") from None
    if not isinstance(content, str):
        raise BadResponseError("completion content is not text")
    return content


def normalize_prompt(prompt: str) -> str:
    return " ".join(prompt.split())


class ScriptedBackend:
    """Deterministic replies for tests and golden pipelines.

    ``exact`` looks prompts up verbatim, ``hash`` by the SHA-256 of the
    whitespace-collapsed prompt (later entries win on collision), and
    ``sequence`` pops replies in order whatever the prompt.
    """

    MODES = ("exact", "hash", "sequence")

    def __init__(self, responses: Mapping[str, str] | Sequence[str], key_mode: str = "sequence", audit: AuditLog | None = None):
        if key_mode not in self.MODES:
            raise ConfigError(f"unknown key_mode {key_mode!r}")
        if not responses:
            raise ConfigError("scripted backend needs at least one response")
        self.key_mode = key_mode
        self.backend_id = f"scripted:{key_mode}"
        self.audit = audit
        self._lock = threading.Lock()
        if key_mode == "sequence":
            items = list(responses.values()) if isinstance(responses, Mapping) else list(responses)
            self._queue = list(items)
        elif not isinstance(responses, Mapping):
            raise ConfigError(f"{key_mode} mode needs a prompt->response mapping")
        elif key_mode == "exact":
            self._table = dict(responses)
        else:
            self._table = {prompt_hash(normalize_prompt(k)): v for k, v in responses.items()}
        self.calls = 0

    @property
    def remaining(self) -> int:
        return len(self._queue) if self.key_mode == "sequence" else -1

    def complete(self, prompt: str) -> CompletionRecord:
        _check_prompt(prompt)
        with self._lock:
            self.calls += 1
            if self.key_mode == "sequence":
                if not self._queue:
                    raise ScriptExhaustedError(f"script exhausted after {self.calls - 1} replies")
                text = self._queue.pop(0)
            else:
                key = prompt if self.key_mode == "exact" else prompt_hash(normalize_prompt(prompt))
                if key not in self._table:
                    raise ScriptMissError(f"no scripted reply for prompt {prompt_hash(prompt)[:12]}")
                text = self._table[key]
        rec = CompletionRecord(prompt, text, 0.0, 1, self.backend_id)
        if self.audit:
            self.audit.record(rec)
        return rec


def script_backend(responses: Mapping[str, str] | Sequence[str], key_mode: str = "sequence") -> ScriptedBackend:
    return ScriptedBackend(responses, key_mode)


def load_script(path: str | Path, stage: str | None = None) -> ScriptedBackend:
    """Build a scripted backend from a JSON file.

    The file holds ``{"key_mode": ..., "responses": ...}``, optionally nested
    per pipeline stage under ``"stages"``.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "stages" in raw:
        if stage not in raw["stages"]:
            raise ConfigError(f"script {path} has no entry for stage {stage!r}")
        raw = raw["stages"][stage]
    return ScriptedBackend(raw["responses"], raw.get("key_mode", "sequence"))


def complete_many(backend: Backend, prompts: Mapping[str, str], parallelism: int = 1) -> dict[str, CompletionRecord]:
    """Run keyed prompts with bounded parallelism; results are keyed, not positional."""
    keys = list(prompts)
    if parallelism <= 1:
        return {k: backend.complete(prompts[k]) for k in keys}
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {k: pool.submit(backend.complete, prompts[k]) for k in keys}
        return {k: futures[k].result() for k in keys}


def make_backend(config: BackendConfig, stage: str | None = None, audit: AuditLog | None = None) -> Backend:
    if config.script:
        backend = load_script(config.script, stage)
        backend.audit = audit
        return backend
    return HTTPBackend(config, audit=audit)


def complete(backend: Backend, prompt: str) -> CompletionRecord:
    return backend.complete(prompt)
