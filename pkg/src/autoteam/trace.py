"""Append-only JSON Lines event log for runs, and replay of recorded completions."""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .errors import CorruptTrace, TraceIOError

PHASES = ("drafting", "execution", "eval")
KINDS = ("prompt", "completion", "parse", "tool", "transition", "error")


@dataclass
class TraceEvent:
    seq: int
    phase: str
    kind: str
    payload: dict
    fingerprint: str | None = None
    correlation: int | None = None
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    def comparable(self) -> dict:
        data = asdict(self)
        data.pop("timestamp")
        return data


class TraceRecorder:
    """Numbers events gaplessly from 1 and writes each one before returning.

    With ``path=None`` events are kept in memory only. The file is created
    (or truncated) at the first event, so an unwritable destination fails
    there; every later event is appended and synced.
    """

    def __init__(self, path: str | os.PathLike | None = None, phase: str = "drafting"):
        self.path = Path(path) if path is not None else None
        self.phase = phase
        self.events: list[TraceEvent] = []
        self._fh = None
        self._correlation = 0

    def next_correlation(self) -> int:
        self._correlation += 1
        return self._correlation

    def record(self, kind: str, payload: dict, *, fingerprint: str | None = None,
               correlation: int | None = None, phase: str | None = None) -> TraceEvent:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = TraceEvent(
            seq=len(self.events) + 1,
            phase=phase or self.phase,
            kind=kind,
            payload=payload,
            fingerprint=fingerprint,
            correlation=correlation,
        )
        self.record_event(event)
        return event

    def record_event(self, event: TraceEvent) -> None:
        if event.seq != len(self.events) + 1:
            raise ValueError(f"event seq {event.seq} breaks the sequence at {len(self.events) + 1}")
        if self.path is not None:
            try:
                if self._fh is None:
                    self._fh = open(self.path, "w", encoding="utf-8")
                self._fh.write(event.to_json() + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise TraceIOError(f"{self.path}: {exc}") from exc
        self.events.append(event)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_run(path: str | os.PathLike) -> list[TraceEvent]:
    events: list[TraceEvent] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise TraceIOError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                event = TraceEvent(**data)
            except (json.JSONDecodeError, TypeError) as exc:
                raise CorruptTrace(f"line {lineno}: {exc}", line=lineno) from exc
            expected = len(events) + 1
            if event.seq != expected:
                raise CorruptTrace(f"line {lineno}: expected seq {expected}, found {event.seq}",
                                   line=lineno, seq=expected)
            events.append(event)
    check_pairing(events)
    return events


def check_pairing(events: Iterable[TraceEvent]) -> None:
    """Every prompt must be answered by exactly one completion or error with its correlation id."""
    open_prompts: dict[int, int] = {}
    for event in events:
        if event.kind == "prompt":
            open_prompts[event.correlation] = event.seq
        elif event.kind in ("completion", "error") and event.correlation is not None:
            if open_prompts.pop(event.correlation, None) is None:
                raise CorruptTrace(f"seq {event.seq}: {event.kind} without a prompt", seq=event.seq)
    if open_prompts:
        seq = min(open_prompts.values())
        raise CorruptTrace(f"seq {seq}: prompt without a completion", seq=seq)


def traces_equal(a: Iterable[TraceEvent], b: Iterable[TraceEvent]) -> bool:
    return [e.comparable() for e in a] == [e.comparable() for e in b]


def first_difference(a: list[TraceEvent], b: list[TraceEvent]) -> int | None:
    """Seq of the first event that differs (timestamps ignored), or None."""
    for x, y in zip(a, b):
        if x.comparable() != y.comparable():
            return x.seq
    if len(a) != len(b):
        return min(len(a), len(b)) + 1
    return None


def stats(events: Iterable[TraceEvent]) -> dict:
    by_phase: Counter = Counter()
    by_kind: Counter = Counter()
    calls: Counter = Counter()
    for event in events:
        by_phase[event.phase] += 1
        by_kind[event.kind] += 1
        if event.kind == "prompt":
            calls[event.phase] += 1
    return {"events": dict(by_phase), "kinds": dict(by_kind), "model_calls": dict(calls)}


def replay_backend(events: Iterable[TraceEvent]):
    """Scripted provider serving the recorded completions in order.

    Each script entry carries the fingerprint of the prompt it answered, so a
    changed prompt surfaces as ``replay-divergence``.
    """
    from .llm import ScriptEntry, ScriptedBackend

    prompts: dict[int, TraceEvent] = {}
    entries: list[ScriptEntry] = []
    for event in events:
        if event.kind == "prompt":
            prompts[event.correlation] = event
        elif event.kind in ("completion", "error") and event.correlation in prompts:
            prompt = prompts.pop(event.correlation)
            fields = prompt.payload.get("field_hashes")
            if event.kind == "completion":
                entries.append(ScriptEntry(text=event.payload["text"],
                                           usage=event.payload.get("usage"),
                                           fingerprint=prompt.fingerprint, fields=fields))
            else:
                entries.append(ScriptEntry(error=event.payload.get("code"),
                                           error_message=event.payload.get("message", ""),
                                           fingerprint=prompt.fingerprint, fields=fields))
    return ScriptedBackend(entries, backend_id="replay")
