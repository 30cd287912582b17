"""Short-term (per agent), long-term (per run) and budgeted dynamic memory."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import CommitFailedStep

DEFAULT_BUDGET = 6000
RUN_SCOPE = "*run*"


class Scope(str, Enum):
    SHORT_TERM = "short-term"
    LONG_TERM = "long-term"


class EntryKind(str, Enum):
    THOUGHT = "thought"
    PLAN = "plan"
    OBSERVATION = "observation"
    SUMMARY = "summary"
    TASK_RECORD = "task-record"


@dataclass(frozen=True)
class MemoryEntry:
    scope: Scope
    agent: str
    step_index: int
    kind: EntryKind
    text: str
    seq: int
    forced: bool = False

    def render(self) -> str:
        if self.kind is EntryKind.TASK_RECORD:
            header = f"[step {self.step_index} record]"
        else:
            header = f"[step {self.step_index} {self.agent} {self.kind.value}]"
        return f"{header}\n{self.text}\n\n"


def estimate_tokens(text: str) -> int:
    """Rough size: four characters per token, rounded up."""
    return (len(text) + 3) // 4


def entry_cost(entry: MemoryEntry) -> int:
    return estimate_tokens(entry.render())


@dataclass(frozen=True)
class ContextBundle:
    entries: tuple[MemoryEntry, ...]
    rendered: str
    budget_used: int


def priority(entry: MemoryEntry) -> tuple[int, int]:
    """Sort key, most important first: task records, summaries, observations, then the rest; newest first."""
    tier = {
        EntryKind.TASK_RECORD: 0,
        EntryKind.SUMMARY: 1,
        EntryKind.OBSERVATION: 2,
    }.get(entry.kind, 3)
    return tier, -entry.seq


def trim_to_budget(entries: Iterable[MemoryEntry], budget: int) -> list[MemoryEntry]:
    """Drop lowest-priority entries until the total estimate fits ``budget``.

    Kept entries are returned in ``seq`` order; entries are never split.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    ranked = sorted(entries, key=priority)
    total = sum(entry_cost(e) for e in ranked)
    while ranked and total > budget:
        total -= entry_cost(ranked.pop())
    return sorted(ranked, key=lambda e: e.seq)


class MemoryStore:
    """Append-only memory for one run. ``seq`` is shared by both tiers."""

    def __init__(self):
        self.short_term: list[MemoryEntry] = []
        self.long_term: list[MemoryEntry] = []
        self._seq = 0

    def _next(self) -> int:
        self._seq += 1
        return self._seq

    def _add(self, store: list, **fields) -> MemoryEntry:
        entry = MemoryEntry(seq=self._next(), **fields)
        store.append(entry)
        return entry

    def append_short_term(self, agent: str, step_index: int, action) -> list[MemoryEntry]:
        """Record one refinement action as thought, plan and observation entries.

        The observation of a terminal action is stored as a ``summary``.
        """
        final_kind = EntryKind.SUMMARY if getattr(action, "is_final", False) else EntryKind.OBSERVATION
        return [
            self._add(self.short_term, scope=Scope.SHORT_TERM, agent=agent, step_index=step_index,
                      kind=kind, text=text)
            for kind, text in ((EntryKind.THOUGHT, action.thought),
                               (EntryKind.PLAN, action.plan),
                               (final_kind, action.observation))
        ]

    def commit_long_term(self, result) -> MemoryEntry:
        if result.status.value == "failed":
            raise CommitFailedStep(f"step {result.step_index} failed and cannot be committed")
        text = (f"Step {result.step_index} ({', '.join(result.agents)}): {result.step_text}\n"
                f"Result:\n{result.final_output}")
        return self._add(self.long_term, scope=Scope.LONG_TERM, agent=RUN_SCOPE,
                         step_index=result.step_index, kind=EntryKind.TASK_RECORD, text=text,
                         forced=result.status.value == "forced-final")

    def long_term_digest(self) -> str:
        return "".join(e.render() for e in self.long_term).strip()

    def candidates(self, agent: str) -> list[MemoryEntry]:
        own = [e for e in self.short_term
               if e.agent == agent and e.kind in (EntryKind.SUMMARY, EntryKind.OBSERVATION)]
        return [*self.long_term, *own]

    def assemble_dynamic_context(self, agent: str, step_text: str, budget: int = DEFAULT_BUDGET) -> ContextBundle:
        """Budgeted bundle of what ``agent`` may see for the step described by ``step_text``.

        Eligible: every long-term record, plus the agent's own summaries and
        observations. Other agents' thoughts and plans stay private.
        """
        if budget <= 0:
            raise ValueError("budget must be positive")
        kept = trim_to_budget(self.candidates(agent), budget)
        return ContextBundle(tuple(kept), "".join(e.render() for e in kept),
                             sum(entry_cost(e) for e in kept))
