"""Model-call plumbing shared by the drafting and execution stages."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, TypeVar

from .errors import AutoTeamError, ParseError, StructuralReject
from .llm import CompletionRequest, Provider, RetryPolicy, with_retry
from .prompts import TemplateSet, default_templates

T = TypeVar("T")

DEFAULT_REPROMPTS = 2


class RepromptsExhausted(AutoTeamError):
    code = "reprompts-exhausted"

    def __init__(self, last_error: AutoTeamError, tag: str, exchanges: list[tuple[str, str]]):
        super().__init__(f"{tag}: {last_error.code} after {len(exchanges)} attempts: {last_error.message}")
        self.last_error = last_error
        self.tag = tag
        self.exchanges = exchanges


@dataclass
class Session:
    provider: Provider
    trace: object | None = None
    templates: TemplateSet = field(default_factory=default_templates)
    temperature: float = 0.0
    max_tokens: int | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    sleep: Callable[[float], None] = time.sleep
    reprompt_budget: int = DEFAULT_REPROMPTS
    calls: int = 0

    def event(self, kind: str, payload: dict) -> None:
        if self.trace is not None:
            self.trace.record(kind, payload)

    def call(self, tag: str, prompt: str) -> str:
        request = CompletionRequest(user_text=prompt, temperature=self.temperature,
                                    max_tokens=self.max_tokens, tag=tag)
        self.calls += 1
        return with_retry(self.provider, request, self.retry, sleep=self.sleep).text

    def ask(self, tag: str, prompt: str, parser: Callable[[str], T],
            budget: int | None = None) -> tuple[T, str, list[tuple[str, str]]]:
        """Call the model and parse its reply, reprompting with the error on failure.

        Returns the parsed value, the accepted reply text, and every
        ``(prompt, reply)`` exchange made along the way.
        """
        budget = self.reprompt_budget if budget is None else budget
        exchanges: list[tuple[str, str]] = []
        current = prompt
        for attempt in range(budget + 1):
            text = self.call(tag, current)
            exchanges.append((current, text))
            try:
                value = parser(text)
            except (ParseError, StructuralReject) as exc:
                self.event("parse", {"tag": tag, "ok": False, "code": exc.code, "message": exc.message})
                if attempt == budget:
                    raise RepromptsExhausted(exc, tag, exchanges) from exc
                current = prompt + reprompt_suffix(exc)
                continue
            self.event("parse", {"tag": tag, "ok": True})
            return value, text, exchanges
        raise AssertionError("unreachable")


def reprompt_suffix(exc: AutoTeamError) -> str:
    if isinstance(exc, StructuralReject):
        detail = exc.feedback
    else:
        detail = f"{exc.code}: {exc.message}"
    return ("\n\n# Format Error\nYour previous reply could not be used:\n"
            f"{detail}\nReply again and follow the format example exactly.\n")
