"""Execution stage: the action observer picks steps, generated agents carry them out.

A step with one agent runs the self-refinement loop; a step with several runs
collaborative refinement with a fixed turn order. Either loop ends on the
first ``Final Output`` action or at its cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import ExecutionFailed, ParseError, RefinementFailed, UnknownAgent
from .memory import DEFAULT_BUDGET, MemoryStore
from .parsing import FINAL_OUTPUT, NextStep, parse_agent_action, parse_next_step
from .prompts import PromptKind, format_example
from .runtime import RepromptsExhausted, Session
from .schema import AgentSpec, ExecutionPlan, PlanStep, StepStatus, Task, TeamDraft, normalize_name
from .toolkit import Toolkit, ToolOutcome, Workspace

DEFAULT_REFINEMENT_CAP = 5
DEFAULT_COLLAB_ROUNDS = 5
DEFAULT_MAX_SYNTHESIZED = 2


class ResultStatus(str, Enum):
    COMPLETED = "completed"
    FORCED_FINAL = "forced-final"
    FAILED = "failed"


@dataclass(frozen=True)
class RefinementAction:
    iteration: int
    agent: str
    thought: str
    plan: str
    current_step: str
    tool_used: str
    action_input: str
    observation: str
    is_final: bool = False


@dataclass
class StepResult:
    step_index: int
    agents: tuple[str, ...]
    step_text: str
    actions: list[RefinementAction]
    final_output: str
    status: ResultStatus


@dataclass
class ExecutionState:
    plan: ExecutionPlan
    results: list[StepResult] = field(default_factory=list)
    history_digest: str = ""
    outcome: str = "in-progress"


@dataclass(frozen=True)
class Selection:
    agent_names: tuple[str, ...]
    step_text: str
    extracted_history: str
    step_index: int
    synthesized: bool = False


@dataclass
class ExecutionConfig:
    refinement_cap: int = DEFAULT_REFINEMENT_CAP
    collab_rounds: int = DEFAULT_COLLAB_ROUNDS
    forced_final: bool = True
    max_synthesized: int = DEFAULT_MAX_SYNTHESIZED
    memory_budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.refinement_cap < 1 or self.collab_rounds < 1:
            raise ValueError("refinement caps must be >= 1")


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def render_completed(actions: list[RefinementAction], with_agent: bool = False) -> str:
    if not actions:
        return "None"
    blocks = []
    for n, action in enumerate(actions, start=1):
        who = f" ({action.agent})" if with_agent else ""
        blocks.append(f"Step {n}{who}: {action.current_step}\n"
                      f"Action: {action.tool_used or '(none)'}\n"
                      f"ActionInput: {action.action_input}\n"
                      f"Observation: {action.observation}")
    return "\n\n".join(blocks)


def forced_digest(actions: list[RefinementAction]) -> str:
    return "\n\n".join(f"[{a.agent} #{a.iteration}] {a.observation}" for a in actions)


class Executor:
    """Runs one execution stage for a drafted team; strictly sequential."""

    def __init__(self, session: Session, team: TeamDraft, task: Task, toolkit: Toolkit,
                 workspace: Workspace, memory: MemoryStore | None = None,
                 config: ExecutionConfig | None = None):
        self.session = session
        self.team = team
        self.task = task
        self.toolkit = toolkit
        self.workspace = workspace
        self.memory = memory or MemoryStore()
        self.config = config or ExecutionConfig()
        self.synthesized = 0

    # -- selection ------------------------------------------------------------

    def _roles_text(self) -> str:
        return "\n".join(f"- {r.name}: {r.description}" for r in self.team.roles)

    def observer_prompt(self, unfinished: list[PlanStep]) -> str:
        templates = self.session.templates
        return templates.render(PromptKind.ACTION_OBSERVER, {
            "task": self.task.text,
            "roles": self._roles_text(),
            "history": self.memory.long_term_digest() or "None",
            "states": "\n".join(f"{s.index}. {s.text}" for s in unfinished),
            "format_example": format_example(PromptKind.ACTION_OBSERVER, templates),
        })

    def _parse_selection(self, text: str) -> NextStep:
        parsed = parse_next_step(text)
        unknown = [a for a in parsed.agent_names if self.team.find(a) is None]
        if unknown:
            raise ParseError("no-agent-named", f"unknown expert role(s): {', '.join(unknown)}; "
                             f"use names from the Existing Expert Roles list", unknown=unknown)
        return parsed

    @staticmethod
    def match_step(parsed: NextStep, unfinished: list[PlanStep]) -> PlanStep | None:
        agents = {normalize_name(a) for a in parsed.agent_names}
        target = _norm(f"{', '.join(parsed.agent_names)}: {parsed.step_text}")
        for step in unfinished:
            same_agents = agents == {normalize_name(a) for a in step.assigned_agents}
            if _norm(step.text) == target or (same_agents and _norm(step.description) == _norm(parsed.step_text)):
                return step
        for step in unfinished:
            if step.index == parsed.step_index and agents == {normalize_name(a) for a in step.assigned_agents}:
                return step
        return None

    def select_next_step(self, state: ExecutionState) -> Selection:
        unfinished = state.plan.unfinished()
        if not unfinished:
            raise ValueError("no unfinished steps")
        try:
            parsed, _, _ = self.session.ask("action-observer", self.observer_prompt(unfinished),
                                            self._parse_selection)
        except RepromptsExhausted as exc:
            raise ExecutionFailed(f"step selection failed: {exc.message}") from exc

        step = self.match_step(parsed, unfinished)
        if step is not None:
            state.plan.mark(step.index, StepStatus.IN_PROGRESS)
            return Selection(step.assigned_agents, step.description, parsed.extracted_history, step.index)
        agents = tuple(self.team.find(a).name for a in parsed.agent_names)
        if self.synthesized < self.config.max_synthesized:
            self.synthesized += 1
            step = state.plan.append(agents, parsed.step_text)
            state.plan.mark(step.index, StepStatus.IN_PROGRESS)
            self.session.event("transition", {"stage": "execution", "event": "step-synthesized",
                                              "index": step.index, "agents": list(agents)})
            return Selection(agents, parsed.step_text, parsed.extracted_history, step.index, synthesized=True)
        step = unfinished[0]
        self.session.event("transition", {"stage": "execution", "event": "synthesized-bound-reached",
                                          "fallback": step.index})
        state.plan.mark(step.index, StepStatus.IN_PROGRESS)
        return Selection(step.assigned_agents, step.description, parsed.extracted_history, step.index)

    # -- agent turns ----------------------------------------------------------

    def allowed_tools(self, agent: AgentSpec) -> list[str]:
        names = [d.name for d in (self.toolkit.lookup(t) for t in agent.toolset) if d is not None]
        if FINAL_OUTPUT not in names and self.toolkit.lookup(FINAL_OUTPUT) is not None:
            names.append(FINAL_OUTPUT)
        return names

    def agent_prompt(self, agent: AgentSpec, step_text: str, previous: str, completed: str) -> str:
        templates = self.session.templates
        return templates.render(PromptKind.CUSTOM_AGENT, {
            "role": agent.prompt,
            "context": f"{step_text}\n\nOriginal question or task: {self.task.text}",
            "suggestions": agent.suggestions or "None",
            "previous": previous or "None",
            "completed_steps": completed,
            "tool": ", ".join(self.allowed_tools(agent)),
            "format_example": format_example(PromptKind.CUSTOM_AGENT, templates),
        })

    def previous_for(self, agent: AgentSpec, selection: Selection) -> str:
        bundle = self.memory.assemble_dynamic_context(agent.name, selection.step_text,
                                                      self.config.memory_budget)
        parts = [bundle.rendered.strip()]
        if selection.extracted_history.strip():
            parts.append(f"Relevant history:\n{selection.extracted_history.strip()}")
        return "\n\n".join(p for p in parts if p)

    def _run_tool(self, agent: AgentSpec, name: str, action_input: str) -> ToolOutcome:
        allowed = {normalize_name(t) for t in self.allowed_tools(agent)}
        if normalize_name(name) not in allowed:
            outcome = ToolOutcome(name, f"unknown-tool: {name!r} is not one of "
                                        f"[{', '.join(self.allowed_tools(agent))}]", ok=False)
        else:
            outcome = self.toolkit.execute_tool(name, action_input, self.workspace)
        self.session.event("tool", {"agent": agent.name, "tool": outcome.tool, "ok": outcome.ok,
                                    "terminal": outcome.terminal, "observation": outcome.observation})
        return outcome

    def agent_turn(self, agent: AgentSpec, selection: Selection, iteration: int,
                   completed: str) -> RefinementAction:
        prompt = self.agent_prompt(agent, selection.step_text, self.previous_for(agent, selection), completed)
        known = self.allowed_tools(agent)
        try:
            parsed, _, _ = self.session.ask(f"agent:{agent.name}", prompt,
                                            lambda text: parse_agent_action(text, known))
        except RepromptsExhausted as exc:
            action = RefinementAction(iteration, agent.name, "", "", "", "", "",
                                      f"{exc.last_error.code}: {exc.last_error.message}")
        else:
            outcome = self._run_tool(agent, parsed.action, parsed.action_input)
            action = RefinementAction(iteration, agent.name, parsed.thought, parsed.plan, parsed.current_step,
                                      outcome.tool, parsed.action_input, outcome.observation,
                                      is_final=outcome.terminal)
        self.memory.append_short_term(agent.name, selection.step_index, action)
        return action

    def _finish(self, selection: Selection, agents, actions: list[RefinementAction]) -> StepResult:
        agents = tuple(a.name for a in agents)
        if actions and actions[-1].is_final:
            return StepResult(selection.step_index, agents, selection.step_text, actions,
                              actions[-1].action_input, ResultStatus.COMPLETED)
        if not self.config.forced_final:
            raise RefinementFailed(f"step {selection.step_index}: no Final Output within the cap")
        return StepResult(selection.step_index, agents, selection.step_text, actions,
                          forced_digest(actions), ResultStatus.FORCED_FINAL)

    def self_refine(self, agent: AgentSpec, selection: Selection, cap: int | None = None) -> StepResult:
        cap = cap or self.config.refinement_cap
        actions: list[RefinementAction] = []
        for iteration in range(1, cap + 1):
            action = self.agent_turn(agent, selection, iteration, render_completed(actions))
            actions.append(action)
            if action.is_final:
                break
        return self._finish(selection, [agent], actions)

    def collaborative_refine(self, agents: list[AgentSpec], selection: Selection,
                             max_rounds: int | None = None) -> StepResult:
        if len(agents) < 2:
            raise ValueError("collaborative refinement needs at least two agents")
        max_rounds = max_rounds or self.config.collab_rounds
        actions: list[RefinementAction] = []
        for round_no in range(1, max_rounds + 1):
            for agent in agents:
                action = self.agent_turn(agent, selection, round_no, render_completed(actions, with_agent=True))
                actions.append(action)
                if action.is_final:
                    return self._finish(selection, agents, actions)
        return self._finish(selection, agents, actions)

    def dispatch_step(self, selection: Selection) -> StepResult:
        agents = []
        for name in selection.agent_names:
            spec = self.team.find(name)
            if spec is None:
                raise UnknownAgent(name)
            agents.append(spec)
        if len(agents) == 1:
            result = self.self_refine(agents[0], selection)
        else:
            result = self.collaborative_refine(agents, selection)
        self.memory.commit_long_term(result)
        return result

    # -- stage ----------------------------------------------------------------

    def run(self) -> tuple[str, ExecutionState]:
        state = ExecutionState(plan=self.team.plan.copy())
        final_index = state.plan.steps[-1].index
        answers: dict[int, str] = {}
        while state.plan.unfinished():
            selection = self.select_next_step(state)
            self.session.event("transition", {"stage": "execution", "event": "step-start",
                                              "index": selection.step_index,
                                              "agents": list(selection.agent_names)})
            try:
                result = self.dispatch_step(selection)
            except RefinementFailed as exc:
                state.outcome = "failed"
                state.results.append(StepResult(selection.step_index, selection.agent_names,
                                                selection.step_text, [], "", ResultStatus.FAILED))
                self.session.event("transition", {"stage": "execution", "event": "failed",
                                                  "index": selection.step_index})
                raise ExecutionFailed(f"step {selection.step_index} failed: {exc.message}",
                                      step=selection.step_index) from exc
            state.results.append(result)
            state.plan.mark(selection.step_index, StepStatus.DONE)
            answers[selection.step_index] = result.final_output
            self.session.event("transition", {"stage": "execution", "event": "step-done",
                                              "index": selection.step_index, "status": result.status.value})
        state.history_digest = self.memory.long_term_digest()
        state.outcome = "done"
        return answers[final_index], state


def run_execution(session: Session, team: TeamDraft, task: Task, toolkit: Toolkit, workspace: Workspace,
                  memory: MemoryStore | None = None,
                  config: ExecutionConfig | None = None) -> tuple[str, ExecutionState]:
    return Executor(session, team, task, toolkit, workspace, memory, config).run()
