"""Drafting stage: the planner proposes a team and plan, two observers critique it.

One round is a planner call followed by the agent observer and then the plan
observer. Drafting converges when both observers answer "No Suggestions" in
the same round; otherwise the planner revises with both critiques, up to the
round cap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import DraftingFailed, ParseError, StructuralReject
from .parsing import _find_headers, _header_re, extract_role_blobs, parse_critique, parse_plan_steps
from .prompts import PromptKind, format_example
from .runtime import RepromptsExhausted, Session
from .schema import (AgentSpec, Critique, ExecutionPlan, Origin, PlanStep, Task, TeamDraft, Violation,
                     validate_team)

DEFAULT_ROUND_CAP = 3


class Outcome(str, Enum):
    IN_PROGRESS = "in-progress"
    CONVERGED = "converged"
    CAP_REACHED = "cap-reached"
    FAILED = "failed"


@dataclass(frozen=True)
class Turn:
    speaker: str
    prompt: str
    response: str


@dataclass
class DraftingState:
    task: Task
    round_cap: int = DEFAULT_ROUND_CAP
    draft: TeamDraft | None = None
    round: int = 0
    history: list[Turn] = field(default_factory=list)
    outcome: Outcome = Outcome.IN_PROGRESS
    critiques: list[tuple[Critique, Critique]] = field(default_factory=list)

    @property
    def team(self) -> TeamDraft | None:
        return self.draft


# -- structural gate ----------------------------------------------------------

_PLANNER_KEYS = {
    "selected": r"selected[ \t]*roles?(?:[ \t]*list)?",
    "created": r"created[ \t]*roles?(?:[ \t]*list)?",
    "plan": r"execution[ \t]*plan",
    "thought": r"thoughts?",
    "rolefeedback": r"role[ \t]*feedback",
    "planfeedback": r"plan[ \t]*feedback",
}
_PLANNER_HEADERS = _header_re(_PLANNER_KEYS)


def _planner_sections(text: str) -> dict[str, str]:
    headers = _find_headers(text, _PLANNER_HEADERS, _PLANNER_KEYS)
    sections = {}
    for h in headers:
        end = min((o.start for o in headers if o.start > h.start), default=len(text))
        sections.setdefault(h.key, text[h.content:end])
    return sections


def _blobs_or_empty(text: str, origin: Origin) -> list[AgentSpec]:
    try:
        return extract_role_blobs(text, origin)
    except ParseError as exc:
        if exc.code == "no-blobs-found":
            return []
        raise


def feedback_for(report: list[Violation]) -> str:
    lines = ["Your previous output was rejected by automatic checks:"]
    lines += [f"- {v.describe()}" for v in report]
    lines.append("Fix every item and output the complete role lists and execution plan again.")
    return "\n".join(lines)


def structural_gate(raw: str, registered_tools, revision: int = 0) -> TeamDraft:
    """Parse a planner reply into a :class:`TeamDraft` that passes :func:`validate_team`.

    Raises :class:`StructuralReject` carrying the violation report otherwise.
    """
    registered_tools = list(registered_tools)
    sections = _planner_sections(raw)
    try:
        if "selected" in sections or "created" in sections:
            selected = _blobs_or_empty(sections.get("selected", ""), Origin.SELECTED)
            created = _blobs_or_empty(sections.get("created", ""), Origin.CREATED)
            if not selected and not created:
                raise ParseError("no-blobs-found", "no role JSON blobs in the role lists")
        else:
            selected, created = [], extract_role_blobs(raw, Origin.CREATED)
        steps = parse_plan_steps(sections.get("plan", raw))
    except ParseError as exc:
        report = [Violation(exc.code, detail=exc.message)]
        raise StructuralReject(report, feedback_for(report)) from exc

    draft = TeamDraft(selected, created, ExecutionPlan([_canonical(s, selected + created) for s in steps]),
                      revision)
    report = validate_team(draft, registered_tools)
    if report:
        raise StructuralReject(report, feedback_for(report))
    return draft


def _canonical(step: PlanStep, roles: list[AgentSpec]) -> PlanStep:
    by_key = {" ".join(r.name.casefold().split()): r.name for r in roles}
    agents = tuple(by_key.get(" ".join(a.casefold().split()), a) for a in step.assigned_agents)
    return PlanStep(step.index, agents, step.description, step.expected_output, step.required_inputs)


# -- prompts ------------------------------------------------------------------

def render_roles(roles: list[AgentSpec]) -> str:
    if not roles:
        return "None"
    return "\n".join(json.dumps(r.to_blob(), ensure_ascii=False, indent=4) for r in roles)


def _history(entries: list[str]) -> str:
    return "\n\n".join(entries) if entries else "None"


@dataclass
class DraftingContext:
    session: Session
    tools: list[str]
    role_library: list[AgentSpec] = field(default_factory=list)

    @property
    def tools_text(self) -> str:
        return ", ".join(self.tools)

    def planner_prompt(self, task: Task, history: list[str], suggestions: str) -> str:
        return self.session.templates.render(PromptKind.PLANNER, {
            "context": task.text,
            "existing_roles": render_roles(self.role_library) if self.role_library else "",
            "history": _history(history),
            "tools": self.tools_text,
            "format_example": format_example(PromptKind.PLANNER, self.session.templates),
            "suggestions": suggestions,
        })

    def agent_observer_prompt(self, draft: TeamDraft, task: Task, history: list[str]) -> str:
        return self.session.templates.render(PromptKind.AGENT_OBSERVER, {
            "question": task.text,
            "existing_roles": render_roles(self.role_library) if self.role_library else "",
            "selected_roles": render_roles(draft.selected_roles),
            "created_roles": render_roles(draft.created_roles),
            "history": _history(history),
            "tools": self.tools_text,
            "format_example": format_example(PromptKind.AGENT_OBSERVER, self.session.templates),
        })

    def plan_observer_prompt(self, draft: TeamDraft, task: Task, history: list[str]) -> str:
        return self.session.templates.render(PromptKind.PLAN_OBSERVER, {
            "context": task.text,
            "roles": render_roles(draft.roles),
            "plan": draft.plan.render(),
            "history": _history(history),
            "format_example": format_example(PromptKind.PLAN_OBSERVER, self.session.templates),
        })


def _record(state: DraftingState, speaker: str, exchanges) -> None:
    state.history.extend(Turn(speaker, p, r) for p, r in exchanges)


def critique_round(ctx: DraftingContext, draft: TeamDraft, task: Task, state: DraftingState,
                   agent_history: list[str], plan_history: list[str]) -> tuple[Critique, Critique]:
    """Two observer calls, agent observer first; both critiques land in ``state.history``."""
    agent_critique, _, exchanges = ctx.session.ask(
        "agent-observer", ctx.agent_observer_prompt(draft, task, agent_history), parse_critique)
    _record(state, "agent-observer", exchanges)
    plan_critique, _, exchanges = ctx.session.ask(
        "plan-observer", ctx.plan_observer_prompt(draft, task, plan_history), parse_critique)
    _record(state, "plan-observer", exchanges)
    return agent_critique, plan_critique


def combined_suggestions(agent_critique: Critique, plan_critique: Critique) -> str:
    return (f"Agent Observer suggestions:\n{agent_critique.body}\n\n"
            f"Plan Observer suggestions:\n{plan_critique.body}")


def run_drafting(task: Task, ctx: DraftingContext, round_cap: int = DEFAULT_ROUND_CAP) -> DraftingState:
    if round_cap < 1:
        raise ValueError("round_cap must be >= 1")
    state = DraftingState(task=task, round_cap=round_cap)
    session = ctx.session
    history: list[str] = []
    agent_history: list[str] = []
    plan_history: list[str] = []
    suggestions = ""

    def structural(text: str) -> TeamDraft:
        return structural_gate(text, ctx.tools, revision=state.round - 1)

    for round_no in range(1, round_cap + 1):
        state.round = round_no
        session.event("transition", {"stage": "drafting", "event": "round-start", "round": round_no})
        try:
            draft, _, exchanges = session.ask("planner", ctx.planner_prompt(task, history, suggestions),
                                              structural)
            _record(state, "planner", exchanges)
            state.draft = draft
            agent_critique, plan_critique = critique_round(ctx, draft, task, state,
                                                           agent_history, plan_history)
        except RepromptsExhausted as exc:
            _record(state, exc.tag, exc.exchanges)
            if state.draft is None:
                state.outcome = Outcome.FAILED
                session.event("transition", {"stage": "drafting", "event": "failed",
                                             "round": round_no, "reason": exc.message})
                raise DraftingFailed(f"no structurally valid draft: {exc.message}") from exc
            state.outcome = Outcome.CAP_REACHED
            session.event("transition", {"stage": "drafting", "event": "reprompt-budget-exhausted",
                                         "round": round_no, "reason": exc.message})
            return state

        state.critiques.append((agent_critique, plan_critique))
        if agent_critique.clean and plan_critique.clean:
            state.outcome = Outcome.CONVERGED
            session.event("transition", {"stage": "drafting", "event": "converged", "round": round_no})
            return state

        agent_history.append(f"Round {round_no}:\n{agent_critique.body}")
        plan_history.append(f"Round {round_no}:\n{plan_critique.body}")
        history.append(f"## Round {round_no}\n{combined_suggestions(agent_critique, plan_critique)}")
        suggestions = combined_suggestions(agent_critique, plan_critique)

    state.outcome = Outcome.CAP_REACHED
    session.event("transition", {"stage": "drafting", "event": "cap-reached", "round": state.round})
    return state

