"""Loading and rendering of the five role prompt templates.

Templates live in ``autoteam/templates`` as UTF-8 text with single-brace
``{placeholder}`` markers. Quadrupled braces in the stored text are brace
literals and render as a single brace.
"""

from __future__ import annotations

import re
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import MissingBinding


class PromptKind(str, Enum):
    PLANNER = "planner"
    AGENT_OBSERVER = "agent-observer"
    PLAN_OBSERVER = "plan-observer"
    ACTION_OBSERVER = "action-observer"
    CUSTOM_AGENT = "custom-agent"

    @property
    def stem(self) -> str:
        return self.value.replace("-", "_")


_TOKEN = re.compile(r"\{\{\{\{|\}\}\}\}|\{\{|\}\}|\{(\w+)\}")


class TemplateSet:
    """The template and format example for every :class:`PromptKind`.

    ``directory`` may override any subset of the bundled files
    (``planner.txt``, ``format_planner.txt``, ...).
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self.templates: dict[PromptKind, str] = {}
        self.format_examples: dict[PromptKind, str] = {}
        for kind in PromptKind:
            self.templates[kind] = self._read(f"{kind.stem}.txt")
            self.format_examples[kind] = self._read(f"format_{kind.stem}.txt").rstrip("\n")

    def _read(self, name: str) -> str:
        if self.directory is not None and (self.directory / name).is_file():
            return (self.directory / name).read_text(encoding="utf-8")
        return resources.files("autoteam").joinpath("templates", name).read_text(encoding="utf-8")

    def placeholders(self, kind: PromptKind) -> list[str]:
        """Placeholder names in order of first appearance."""
        seen: list[str] = []
        for match in _TOKEN.finditer(self.templates[kind]):
            name = match.group(1)
            if name and name not in seen:
                seen.append(name)
        return seen

    def render(self, kind: PromptKind, bindings: Mapping[str, str]) -> str:
        for name in self.placeholders(kind):
            if name not in bindings:
                raise MissingBinding(name)

        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name is None:
                return match.group(0)[0]
            return str(bindings[name])

        return _TOKEN.sub(substitute, self.templates[kind])


@lru_cache(maxsize=1)
def default_templates() -> TemplateSet:
    return TemplateSet()


def render_prompt(kind: PromptKind | str, bindings: Mapping[str, str],
                  templates: TemplateSet | None = None) -> str:
    templates = templates or default_templates()
    return templates.render(PromptKind(kind), bindings)


def format_example(kind: PromptKind | str, templates: TemplateSet | None = None) -> str:
    templates = templates or default_templates()
    return templates.format_examples[PromptKind(kind)]
