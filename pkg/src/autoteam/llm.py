"""Completion backends: an OpenAI-compatible HTTP client and a scripted/replay backend."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import httpx

from .errors import BackendRejection, ConfigError, ProviderError, ReplayDivergence, ScriptExhausted, TransportError

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0
FINGERPRINT_FIELDS = ("system_text", "user_text", "temperature")


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8", "surrogatepass")).hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.0
    max_tokens: int | None = None
    tag: str = ""

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def field_hashes(self) -> dict[str, str]:
        return {
            "system_text": _sha(self.system_text),
            "user_text": _sha(self.user_text),
            "temperature": repr(float(self.temperature)),
        }

    def fingerprint(self) -> str:
        return _sha(json.dumps([self.system_text, self.user_text, float(self.temperature)]))

    def messages(self) -> list[dict]:
        messages = []
        if self.system_text:
            messages.append({"role": "system", "content": self.system_text})
        messages.append({"role": "user", "content": self.user_text})
        return messages


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    usage: dict | None = None
    backend_id: str = ""


class Provider:
    """Base class: wraps each backend call in a prompt/completion trace pair."""

    backend_id = "abstract"

    def __init__(self, trace=None):
        self.trace = trace

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        trace = self.trace
        if trace is None:
            return self._complete(request)
        correlation = trace.next_correlation()
        fingerprint = request.fingerprint()
        trace.record("prompt", {
            "tag": request.tag,
            "system_text": request.system_text,
            "user_text": request.user_text,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "field_hashes": request.field_hashes(),
        }, fingerprint=fingerprint, correlation=correlation)
        try:
            response = self._complete(request)
        except ProviderError as exc:
            trace.record("error", {"code": exc.code, "message": exc.message, "tag": request.tag},
                         fingerprint=fingerprint, correlation=correlation)
            raise
        trace.record("completion", {"text": response.text, "usage": response.usage, "tag": request.tag},
                     fingerprint=fingerprint, correlation=correlation)
        return response

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError


class HttpBackend(Provider):
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    backend_id = "http"

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout: float = DEFAULT_TIMEOUT, client: httpx.Client | None = None, trace=None):
        super().__init__(trace)
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("AUTOTEAM_API_KEY")
        self.client = client or httpx.Client(timeout=timeout)

    def payload(self, request: CompletionRequest) -> dict:
        body = {
            "model": self.model,
            "messages": request.messages(),
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            body["max_tokens"] = request.max_tokens
        return body

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self.client.post(self.url, json=self.payload(request), headers=headers)
        except httpx.TransportError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise BackendRejection(f"HTTP {resp.status_code}", status=resp.status_code, body=resp.text)
        try:
            data = resp.json()
            text = data["choices"][0]["message"].get("content") or ""
        except (ValueError, KeyError, IndexError, TypeError, AttributeError) as exc:
            raise BackendRejection(f"malformed response body: {exc}", status=resp.status_code,
                                   body=resp.text) from exc
        usage = data.get("usage")
        if isinstance(usage, dict):
            usage = {"prompt": usage.get("prompt_tokens"), "completion": usage.get("completion_tokens")}
        else:
            usage = None
        return CompletionResponse(text=text, usage=usage, backend_id=self.backend_id)


@dataclass
class ScriptEntry:
    """One scripted reply. ``error`` replays a recorded provider failure instead."""

    text: str | None = None
    usage: dict | None = None
    fingerprint: str | None = None
    fields: dict | None = None
    error: str | None = None
    error_message: str = ""

    def to_dict(self) -> dict:
        data = {k: v for k, v in self.__dict__.items() if v not in (None, "")}
        if self.text == "":
            data["text"] = ""
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptEntry":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


_ERRORS = {cls.code: cls for cls in (TransportError, BackendRejection, ScriptExhausted)}


class ScriptedBackend(Provider):
    """Deterministic backend that answers calls from a fixed script, by call order."""

    backend_id = "scripted"

    def __init__(self, script: Iterable[str | ScriptEntry | dict], trace=None, backend_id: str | None = None):
        super().__init__(trace)
        self.entries: list[ScriptEntry] = []
        for item in script:
            if isinstance(item, str):
                item = ScriptEntry(text=item)
            elif isinstance(item, dict):
                item = ScriptEntry.from_dict(item)
            self.entries.append(item)
        self.calls = 0
        self._lock = threading.Lock()
        if backend_id:
            self.backend_id = backend_id

    @property
    def remaining(self) -> int:
        return len(self.entries) - self.calls

    def scripted_lookup(self, call_index: int, request: CompletionRequest) -> CompletionResponse:
        if call_index > len(self.entries):
            raise ScriptExhausted(f"no scripted response for call {call_index} "
                                  f"(script has {len(self.entries)})")
        entry = self.entries[call_index - 1]
        if entry.fingerprint and entry.fingerprint != request.fingerprint():
            raise ReplayDivergence(
                f"call {call_index} ({request.tag or 'untagged'}) differs from the recording "
                f"in {_first_differing_field(entry.fields, request)}",
                call_index=call_index, field=_first_differing_field(entry.fields, request))
        if entry.error:
            raise _ERRORS.get(entry.error, ProviderError)(entry.error_message)
        return CompletionResponse(text=entry.text or "", usage=entry.usage, backend_id=self.backend_id)

    def _complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
            call_index = self.calls
        return self.scripted_lookup(call_index, request)


def _first_differing_field(recorded: dict | None, request: CompletionRequest) -> str:
    if not recorded:
        return "fingerprint"
    current = request.field_hashes()
    for name in FINGERPRINT_FIELDS:
        if recorded.get(name) != current[name]:
            return name
    return "fingerprint"


def load_script(path: str | os.PathLike) -> ScriptedBackend:
    """Read a JSON Lines script: one ``{"text": ...}`` object per line, optional ``fingerprint``."""
    entries = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot open script {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entries.append(ScriptEntry.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad script line: {exc}") from exc
    return ScriptedBackend(entries)


def write_script(path: str | os.PathLike, entries: Sequence[str | ScriptEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            if isinstance(entry, str):
                entry = ScriptEntry(text=entry)
            fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    initial_backoff: float = 1.0
    factor: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        """Seconds to wait after failed attempt number ``attempt`` (1-based)."""
        return self.initial_backoff * self.factor ** (attempt - 1)


def with_retry(provider: Provider, request: CompletionRequest, policy: RetryPolicy = RetryPolicy(),
               sleep: Callable[[float], None] = time.sleep) -> CompletionResponse:
    """Call ``provider`` and retry transport failures only."""
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return provider.complete(request)
        except TransportError as exc:
            if attempt == policy.max_attempts:
                raise
            logger.warning("transport failure on attempt %d/%d: %s", attempt, policy.max_attempts, exc)
            sleep(policy.delay(attempt))
    raise AssertionError("unreachable")
