"""Tool registry and the sandboxed file workspace agents write into."""

from __future__ import annotations

import logging
import os
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .errors import AutoTeamError, DuplicateTool, ParseError, PathEscape
from .parsing import FINAL_OUTPUT, WRITE_FILE, parse_write_file_payload
from .schema import normalize_name

logger = logging.getLogger(__name__)


class ToolKind(str, Enum):
    EFFECTFUL = "effectful"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class ToolDef:
    name: str
    description: str
    kind: ToolKind = ToolKind.EFFECTFUL


@dataclass(frozen=True)
class ToolOutcome:
    tool: str
    observation: str
    terminal: bool = False
    ok: bool = True


def workspace_resolve(root: str | os.PathLike, candidate: str) -> Path:
    """Map a relative path from a model onto a location strictly inside ``root``.

    Absolute paths, ``..`` escapes and symlinks leading out of ``root`` raise
    :class:`PathEscape`. Backslashes are treated as separators.
    """
    root_path = Path(root).resolve(strict=True)
    if not isinstance(candidate, str) or not candidate.strip() or "\x00" in candidate:
        raise PathEscape(f"invalid path {candidate!r}")
    cleaned = candidate.replace("\\", "/")
    if cleaned.startswith("/") or (len(cleaned) > 1 and cleaned[1] == ":"):
        raise PathEscape(f"absolute path {candidate!r}")
    normal = posixpath.normpath(cleaned)
    if normal in (".", "") or normal == ".." or normal.startswith("../"):
        raise PathEscape(f"{candidate!r} does not name a file inside the workspace")
    target = root_path.joinpath(*normal.split("/"))
    try:
        physical = target.resolve(strict=False)
    except (OSError, RuntimeError) as exc:
        raise PathEscape(f"cannot resolve {candidate!r}: {exc}") from exc
    if physical != root_path and root_path not in physical.parents:
        raise PathEscape(f"{candidate!r} resolves outside the workspace")
    return target


@dataclass
class Workspace:
    root: Path
    files_written: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)

    def resolve(self, candidate: str) -> Path:
        return workspace_resolve(self.root, candidate)

    def write(self, candidate: str, content: str) -> tuple[str, int]:
        path = self.resolve(candidate)
        rel = path.relative_to(self.root.resolve()).as_posix()
        path.parent.mkdir(parents=True, exist_ok=True)
        # re-check after creating directories in case a parent was swapped for a symlink
        self.resolve(rel)
        data = content.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(data)
        if rel not in self.files_written:
            self.files_written.append(rel)
        else:
            logger.info("overwrote %s", rel)
        return rel, len(data)


Executor = Callable[[str, Workspace], str]


def _write_file(action_input: str, workspace: Workspace) -> str:
    name, content = parse_write_file_payload(action_input)
    rel, size = workspace.write(name, content)
    return f"wrote {rel} ({size} bytes)"


def _final_output(action_input: str, workspace: Workspace) -> str:
    return action_input


class Toolkit:
    def __init__(self):
        self._tools: dict[str, tuple[ToolDef, Executor]] = {}

    def register_tool(self, definition: ToolDef, executor: Executor) -> None:
        key = normalize_name(definition.name)
        if key in self._tools:
            raise DuplicateTool(definition.name)
        self._tools[key] = (definition, executor)

    def names(self) -> list[str]:
        return [d.name for d, _ in self._tools.values()]

    def definitions(self) -> list[ToolDef]:
        return [d for d, _ in self._tools.values()]

    def lookup(self, name: str) -> ToolDef | None:
        entry = self._tools.get(normalize_name(name))
        return entry[0] if entry else None

    def render(self, names=None) -> str:
        """Comma-separated canonical names, as bound into prompts."""
        if names is None:
            return ", ".join(self.names())
        return ", ".join(d.name for d in (self.lookup(n) for n in names) if d is not None)

    def execute_tool(self, name: str, action_input: str, workspace: Workspace) -> ToolOutcome:
        """Run a tool. Failures come back as observations, never as exceptions."""
        entry = self._tools.get(normalize_name(name))
        if entry is None:
            return ToolOutcome(name, f"unknown-tool: {name!r} is not one of [{self.render()}]", ok=False)
        definition, executor = entry
        try:
            observation = executor(action_input, workspace)
        except (ParseError, AutoTeamError) as exc:
            return ToolOutcome(definition.name, f"{exc.code}: {exc.message}", ok=False)
        except Exception as exc:  # tool bugs are fed back to the agent too
            return ToolOutcome(definition.name, f"tool-error: {type(exc).__name__}: {exc}", ok=False)
        return ToolOutcome(definition.name, observation, terminal=definition.kind is ToolKind.TERMINAL)


def default_toolkit() -> Toolkit:
    toolkit = Toolkit()
    toolkit.register_tool(ToolDef(
        WRITE_FILE,
        "write a file into the workspace; ActionInput is >>>file name<<<, >>>>>, the content, <<<<<",
    ), _write_file)
    toolkit.register_tool(ToolDef(
        FINAL_OUTPUT,
        "finish the task; ActionInput is the complete final answer",
        ToolKind.TERMINAL,
    ), _final_output)
    return toolkit
