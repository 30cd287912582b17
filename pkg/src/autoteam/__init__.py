"""Automatic agent-team generation: draft a team and plan, then execute it step by step."""

from .config import RunConfig
from .drafting import DraftingState, Outcome, run_drafting, structural_gate
from .engine import RunResult, run_task
from .errors import AutoTeamError
from .evaluation import TriviaScore, TriviaTask, load_benchmark, run_benchmark, score_output
from .execution import ExecutionConfig, StepResult, run_execution
from .llm import CompletionRequest, HttpBackend, ScriptedBackend
from .memory import MemoryStore, trim_to_budget
from .parsing import extract_role_blobs, parse_agent_action, parse_critique, parse_next_step, parse_plan_steps
from .schema import AgentSpec, ExecutionPlan, PlanStep, Task, TeamDraft, validate_team
from .toolkit import ToolDef, Toolkit, Workspace, default_toolkit, workspace_resolve
from .trace import TraceRecorder, load_run, replay_backend

__version__ = "0.1.0"

__all__ = [
    "AgentSpec", "AutoTeamError", "CompletionRequest", "DraftingState", "ExecutionConfig", "ExecutionPlan",
    "HttpBackend", "MemoryStore", "Outcome", "PlanStep", "RunConfig", "RunResult", "ScriptedBackend",
    "StepResult", "Task", "TeamDraft", "ToolDef", "Toolkit", "TraceRecorder", "TriviaScore", "TriviaTask", "Workspace",
    "default_toolkit", "extract_role_blobs", "load_benchmark", "load_run", "parse_agent_action",
    "parse_critique", "parse_next_step", "parse_plan_steps", "replay_backend", "run_benchmark",
    "run_drafting", "run_execution", "run_task", "score_output", "structural_gate", "trim_to_budget",
    "validate_team", "workspace_resolve",
]
