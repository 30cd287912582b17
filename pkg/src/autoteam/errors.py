"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` so callers (the CLI,
reprompt messages, trace events) can report it without parsing prose.
"""

from __future__ import annotations


class AutoTeamError(Exception):
    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


# -- provider -----------------------------------------------------------------

class ProviderError(AutoTeamError):
    code = "provider"


class TransportError(ProviderError):
    code = "transport"


class BackendRejection(ProviderError):
    code = "backend-rejection"

    def __init__(self, message: str = "", status: int | None = None, body: str = ""):
        super().__init__(message, status=status, body=body)
        self.status = status
        self.body = body


class ScriptExhausted(ProviderError):
    code = "script-exhausted"


class ReplayDivergence(ProviderError):
    code = "replay-divergence"

    def __init__(self, message: str = "", call_index: int = 0, field: str = ""):
        super().__init__(message, call_index=call_index, field=field)
        self.call_index = call_index
        self.field = field


# -- prompts and parsing ------------------------------------------------------

class MissingBinding(AutoTeamError):
    code = "missing-binding"

    def __init__(self, placeholder: str):
        super().__init__(placeholder, placeholder=placeholder)
        self.placeholder = placeholder


class ParseError(AutoTeamError):
    """Structured parse failure; ``code`` is set per instance."""

    def __init__(self, code: str, message: str = "", **details):
        self.code = code
        super().__init__(message or code, **details)


# -- protocol -----------------------------------------------------------------

class StructuralReject(AutoTeamError):
    code = "structural-reject"

    def __init__(self, report, feedback: str):
        super().__init__(", ".join(v.label for v in report))
        self.report = list(report)
        self.feedback = feedback


class DraftingFailed(AutoTeamError):
    code = "drafting-failed"


class ExecutionFailed(AutoTeamError):
    code = "execution-failed"


class RefinementFailed(AutoTeamError):
    code = "refinement-failed"


class UnknownAgent(AutoTeamError):
    code = "unknown-agent"


# -- memory, tools, traces, evaluation ---------------------------------------

class CommitFailedStep(AutoTeamError):
    code = "commit-failed-step"


class DuplicateTool(AutoTeamError):
    code = "duplicate-tool"


class PathEscape(AutoTeamError):
    code = "path-escape"


class TraceIOError(AutoTeamError):
    code = "trace-io"


class CorruptTrace(AutoTeamError):
    code = "corrupt-trace"

    def __init__(self, message: str = "", line: int | None = None, seq: int | None = None):
        super().__init__(message, line=line, seq=seq)
        self.line = line
        self.seq = seq


class BadBenchmark(AutoTeamError):
    code = "bad-benchmark"

    def __init__(self, message: str = "", line: int | None = None):
        super().__init__(message, line=line)
        self.line = line


class ConfigError(AutoTeamError):
    code = "config"
