"""End-to-end run: drafting then execution, with run-level trace bookkeeping."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .config import RunConfig
from .drafting import DraftingContext, DraftingState, run_drafting
from .errors import AutoTeamError, ConfigError
from .execution import ExecutionConfig, ExecutionState, Executor
from .llm import Provider, RetryPolicy
from .memory import MemoryStore
from .parsing import extract_role_blobs
from .prompts import TemplateSet, default_templates
from .runtime import Session
from .schema import AgentSpec, Origin, Task
from .toolkit import Toolkit, Workspace, default_toolkit
from .trace import TraceRecorder

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    task: Task
    final_answer: str
    drafting: DraftingState
    execution: ExecutionState
    files_written: list[str]


def load_role_library(path: str | Path) -> list[AgentSpec]:
    """Roles from a JSON list of role blobs (or any text containing blobs)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read role library {path}: {exc}") from exc
    try:
        return [AgentSpec.from_blob(b, Origin.SELECTED) for b in json.loads(text)]
    except (ValueError, TypeError, KeyError, AttributeError):
        return extract_role_blobs(text, Origin.SELECTED)


def run_task(task: Task | str, provider: Provider, config: RunConfig, trace: TraceRecorder,
             workspace: Workspace, *, toolkit: Toolkit | None = None,
             role_library: list[AgentSpec] | None = None, templates: TemplateSet | None = None,
             sleep: Callable[[float], None] = time.sleep) -> RunResult:
    """Run the full protocol for one task.

    The run-start event records the task, the protocol settings and the role
    library, which is everything a replay needs besides the completions.
    """
    task = Task(task) if isinstance(task, str) else task
    toolkit = toolkit or default_toolkit()
    role_library = list(role_library or [])
    provider.trace = trace
    session = Session(provider, trace, templates or default_templates(), temperature=config.temperature,
                      max_tokens=config.max_tokens, retry=RetryPolicy(max_attempts=config.retry_attempts),
                      sleep=sleep, reprompt_budget=config.reprompt_budget)

    trace.phase = "drafting"
    trace.record("transition", {"event": "run-start", "task": task.text, "config": config.protocol(),
                                "role_library": [r.to_blob() for r in role_library]})
    try:
        drafting = run_drafting(task, DraftingContext(session, toolkit.names(), role_library),
                                round_cap=config.drafting_rounds)
        trace.phase = "execution"
        executor = Executor(session, drafting.draft, task, toolkit, workspace, MemoryStore(),
                            ExecutionConfig(refinement_cap=config.refinement_cap,
                                            collab_rounds=config.collab_rounds,
                                            forced_final=config.forced_final,
                                            max_synthesized=config.max_synthesized,
                                            memory_budget=config.budget))
        final_answer, execution = executor.run()
    except AutoTeamError as exc:
        trace.record("transition", {"event": "run-failed", "code": exc.code, "message": exc.message,
                                    "files_written": list(workspace.files_written)})
        raise
    trace.record("transition", {"event": "run-end", "final_answer": final_answer,
                                "files_written": list(workspace.files_written)})
    logger.info("run finished: %d model calls, %d files", session.calls, len(workspace.files_written))
    return RunResult(task, final_answer, drafting, execution, list(workspace.files_written))


def run_start(events) -> dict:
    for event in events:
        if event.kind == "transition" and event.payload.get("event") == "run-start":
            return event.payload
    raise ConfigError("trace has no run-start event")


def run_end(events) -> dict | None:
    for event in reversed(list(events)):
        if event.kind == "transition" and event.payload.get("event") in ("run-end", "run-failed"):
            return event.payload
    return None
