"""Protocol domain types and programmatic validation of agents, teams and plans.

Validation never raises: it returns a list of :class:`Violation` records whose
labels are stable codes such as ``empty-name`` or ``unknown-tool:Google Search``.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

LANGUAGE_EXPERT_TOKEN = "language expert"
FINAL_STEP_MARKER = "language expert:"

ROLE_KEYS = ("name", "description", "tools", "suggestions", "prompt")


def normalize_name(name: str) -> str:
    return " ".join(name.casefold().split())


def _normalize_text(text: str) -> str:
    return " ".join(text.casefold().split())


class Origin(str, Enum):
    SELECTED = "selected-existing"
    CREATED = "newly-created"


class StepStatus(str, Enum):
    PENDING = "pending"
    IN_PROGRESS = "in-progress"
    DONE = "done"


class Verdict(str, Enum):
    NO_SUGGESTIONS = "no-suggestions"
    HAS_SUGGESTIONS = "has-suggestions"


@dataclass(frozen=True)
class AgentSpec:
    name: str
    description: str
    prompt: str
    toolset: tuple[str, ...] = ()
    suggestions: str = ""
    origin: Origin = Origin.CREATED

    @property
    def is_language_expert(self) -> bool:
        return (LANGUAGE_EXPERT_TOKEN in self.name.casefold()
                or LANGUAGE_EXPERT_TOKEN in self.description.casefold())

    def to_blob(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "tools": list(self.toolset),
            "suggestions": self.suggestions,
            "prompt": self.prompt,
        }

    @classmethod
    def from_blob(cls, blob: dict, origin: Origin = Origin.CREATED) -> "AgentSpec":
        tools = blob.get("tools") or []
        if isinstance(tools, str):
            tools = [t.strip() for t in tools.split(",") if t.strip()]
        return cls(
            name=str(blob["name"]).strip(),
            description=str(blob["description"]),
            prompt=str(blob["prompt"]),
            toolset=tuple(str(t).strip() for t in tools),
            suggestions=str(blob.get("suggestions", "")),
            origin=origin,
        )


@dataclass(frozen=True)
class PlanStep:
    index: int
    assigned_agents: tuple[str, ...]
    description: str
    expected_output: str = ""
    required_inputs: str = ""

    @property
    def text(self) -> str:
        """The step as it appears in a plan listing: ``Agent A, Agent B: description``."""
        if not self.assigned_agents:
            return self.description
        return f"{', '.join(self.assigned_agents)}: {self.description}"

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "agents": list(self.assigned_agents),
            "description": self.description,
            "expected_output": self.expected_output,
            "required_inputs": self.required_inputs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlanStep":
        return cls(
            index=int(data["index"]),
            assigned_agents=tuple(data.get("agents", ())),
            description=data.get("description", ""),
            expected_output=data.get("expected_output", ""),
            required_inputs=data.get("required_inputs", ""),
        )


@dataclass
class ExecutionPlan:
    """Ordered plan steps plus per-step engine status.

    Status is bookkeeping for the execution stage and is not part of the
    serialized draft shown to the model.
    """

    steps: list[PlanStep]
    status: dict[int, StepStatus] = field(default_factory=dict)

    def __post_init__(self):
        for step in self.steps:
            self.status.setdefault(step.index, StepStatus.PENDING)

    def copy(self) -> "ExecutionPlan":
        return ExecutionPlan(list(self.steps), dict(self.status))

    def step(self, index: int) -> PlanStep:
        for s in self.steps:
            if s.index == index:
                return s
        raise KeyError(index)

    def mark(self, index: int, status: StepStatus) -> None:
        self.status[index] = status

    def unfinished(self) -> list[PlanStep]:
        return [s for s in self.steps if self.status[s.index] is not StepStatus.DONE]

    def append(self, agents: Iterable[str], description: str) -> PlanStep:
        index = max((s.index for s in self.steps), default=0) + 1
        step = PlanStep(index, tuple(agents), description)
        self.steps.append(step)
        self.status[index] = StepStatus.PENDING
        return step

    def render(self) -> str:
        return "\n".join(f"{s.index}. {s.text}" for s in self.steps)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]


@dataclass(frozen=True)
class Task:
    text: str
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("task text must be non-empty")


@dataclass
class TeamDraft:
    selected_roles: list[AgentSpec]
    created_roles: list[AgentSpec]
    plan: ExecutionPlan
    revision: int = 0

    @property
    def roles(self) -> list[AgentSpec]:
        return [*self.selected_roles, *self.created_roles]

    def find(self, name: str) -> AgentSpec | None:
        key = normalize_name(name)
        for role in self.roles:
            if normalize_name(role.name) == key:
                return role
        return None

    def language_expert(self) -> AgentSpec | None:
        experts = [r for r in self.roles if r.is_language_expert]
        return experts[0] if len(experts) == 1 else None

    def to_dict(self) -> dict:
        return {
            "selected_roles": [r.to_blob() for r in self.selected_roles],
            "created_roles": [r.to_blob() for r in self.created_roles],
            "plan": self.plan.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict, revision: int = 0) -> "TeamDraft":
        return cls(
            selected_roles=[AgentSpec.from_blob(b, Origin.SELECTED) for b in data.get("selected_roles", [])],
            created_roles=[AgentSpec.from_blob(b, Origin.CREATED) for b in data.get("created_roles", [])],
            plan=ExecutionPlan([PlanStep.from_dict(s) for s in data.get("plan", [])]),
            revision=revision,
        )


@dataclass(frozen=True)
class Critique:
    body: str
    verdict: Verdict

    @property
    def clean(self) -> bool:
        return self.verdict is Verdict.NO_SUGGESTIONS


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    subject: str = ""
    index: int | None = None
    detail: str = ""

    @property
    def label(self) -> str:
        return f"{self.code}:{self.subject}" if self.subject else self.code

    def describe(self) -> str:
        where = f" (step {self.index})" if self.index is not None else ""
        detail = f": {self.detail}" if self.detail else ""
        return f"{self.label}{where}{detail}"


def labels(report: Iterable[Violation]) -> list[str]:
    return [v.label for v in report]


def validate_agent_spec(spec: AgentSpec, registered_tools: Iterable[str]) -> list[Violation]:
    report: list[Violation] = []
    role = spec.name or "<unnamed>"
    if not spec.name.strip():
        report.append(Violation("empty-name"))
    registry = {normalize_name(t) for t in registered_tools}
    for tool in spec.toolset:
        if normalize_name(tool) not in registry:
            report.append(Violation("unknown-tool", tool, detail=f"role {role}"))
    prompt = _normalize_text(spec.prompt)
    if not prompt:
        report.append(Violation("empty-prompt", detail=f"role {role}"))
    else:
        if spec.name.strip() and normalize_name(spec.name) not in prompt:
            report.append(Violation("prompt-missing-name", detail=f"role {role}"))
        description = _normalize_text(spec.description).rstrip(" .;,")
        if description and description not in prompt:
            report.append(Violation("prompt-missing-description", detail=f"role {role}"))
    return report


def validate_plan(plan: ExecutionPlan, team: TeamDraft) -> list[Violation]:
    report: list[Violation] = []
    if not plan.steps:
        return [Violation("empty-plan")]
    indices = [s.index for s in plan.steps]
    if indices != list(range(1, len(indices) + 1)):
        report.append(Violation("non-contiguous-steps", detail=",".join(map(str, indices))))
    known = {normalize_name(r.name) for r in team.roles}
    for step in plan.steps:
        if not step.assigned_agents:
            report.append(Violation("no-agents", index=step.index))
        for agent in step.assigned_agents:
            if normalize_name(agent) not in known:
                report.append(Violation("unknown-agent", agent, index=step.index))
    final = plan.steps[-1]
    if not final.text.casefold().lstrip().startswith(FINAL_STEP_MARKER):
        report.append(Violation("missing-final-language-expert-step", index=final.index))
    return report


def validate_team(draft: TeamDraft, registered_tools: Iterable[str]) -> list[Violation]:
    registered_tools = list(registered_tools)
    report: list[Violation] = []
    spellings: dict[str, list[str]] = {}
    for role in draft.roles:
        report.extend(validate_agent_spec(role, registered_tools))
        if role.name.strip():
            spellings.setdefault(normalize_name(role.name), []).append(role.name.strip())
    for names in spellings.values():
        if len(names) > 1:
            report.append(Violation("duplicate-name", min(names)))
    experts = [r for r in draft.roles if r.is_language_expert]
    if not experts:
        report.append(Violation("missing-language-expert"))
    elif len(experts) > 1:
        report.append(Violation("multiple-language-experts",
                                detail=", ".join(r.name for r in experts)))
    report.extend(validate_plan(draft.plan, draft))
    return report
