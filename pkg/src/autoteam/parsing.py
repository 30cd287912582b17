"""Parsers for the structured sections of model outputs.

Every parser either returns a value or raises :class:`~autoteam.errors.ParseError`
with a stable code. None of them repair or reinterpret content beyond the
documented tolerances (header styling, curly quotes and trailing commas in
JSON blobs).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ParseError
from .schema import ROLE_KEYS, AgentSpec, Critique, Origin, PlanStep, Verdict, normalize_name

FINAL_OUTPUT = "Final Output"
WRITE_FILE = "Write File"


# -- sections -----------------------------------------------------------------

def _header_re(names: dict[str, str]) -> re.Pattern:
    alternatives = "|".join(f"(?P<{key}>{pattern})" for key, pattern in names.items())
    return re.compile(
        rf"^[ \t]*(?:#+[ \t]*)?(?:\*\*)?(?:{alternatives})(?:\*\*)?[ \t]*"
        rf"(?:(?::|：)(?:\*\*)?[ \t]*(?P<inline>.*?)|)[ \t]*$",
        re.IGNORECASE | re.MULTILINE,
    )


@dataclass
class _Header:
    key: str
    start: int        # start of the header line
    content: int      # start of the section body (inline text or next line)


def _find_headers(text: str, pattern: re.Pattern, keys) -> list[_Header]:
    headers = []
    for match in pattern.finditer(text):
        key = next(k for k in keys if match.group(k) is not None)
        if match.group("inline"):
            content = match.start("inline")
        else:
            content = min(match.end() + 1, len(text))
        headers.append(_Header(key, match.start(), content))
    return headers


def _body(text: str, header: _Header, following: list[_Header]) -> str:
    end = min((h.start for h in following if h.start > header.start), default=len(text))
    return text[header.content:end].strip()


_MD_HEADER = re.compile(r"^[ \t]*#+[ \t]*\S", re.MULTILINE)


# -- agent name lists ---------------------------------------------------------

_DECORATION = "*`\"'[]“”"
_STEP_PREFIX = re.compile(r"^\s*(?:\*\*)?(?:step\s*(\d+)\s*[.):]?|(\d+)\s*[.)])(?:\*\*)?\s*", re.IGNORECASE)


def _strip_decoration(s: str) -> str:
    return s.strip().strip(_DECORATION).strip()


def split_agents(head: str) -> list[str]:
    parts = re.split(r"[,&/;]", _strip_decoration(head))
    return [p for p in (_strip_decoration(x) for x in parts) if p]


def _split_head(body: str) -> tuple[list[str], str]:
    """Split ``Agent A, Agent B: rest`` into names and rest; names empty if no plausible head."""
    colon = body.find(":")
    if colon <= 0:
        return [], body.strip()
    head = body[:colon]
    if "\n" in head.strip() or len(head) > 150 or re.search(r"[.!?](\s|$)", head.strip(" *")):
        return [], body.strip()
    names = split_agents(head.replace("**", ""))
    if not names or any(len(n.split()) > 8 for n in names):
        return [], body.strip()
    return names, body[colon + 1:].lstrip("* \t").strip()


# -- role blobs ---------------------------------------------------------------

_CURLY = str.maketrans({"“": '"', "”": '"'})
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")
_DECODER = json.JSONDecoder(strict=False)


def _balanced_end(text: str, start: int) -> int | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch in '"”“':
                in_string = False
        elif ch in '"“”':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _decode_object(text: str, start: int) -> tuple[object, int] | None:
    try:
        return _DECODER.raw_decode(text, start)
    except (json.JSONDecodeError, RecursionError):
        pass
    end = _balanced_end(text, start)
    if end is None:
        return None
    candidate = _TRAILING_COMMA.sub(r"\1", text[start:end].translate(_CURLY))
    try:
        return json.loads(candidate, strict=False), end
    except (json.JSONDecodeError, RecursionError):
        return None


def extract_role_blobs(text: str, origin: Origin = Origin.CREATED) -> list[AgentSpec]:
    """Return one :class:`AgentSpec` per role JSON object in ``text``, in document order.

    An object counts as a role blob when it carries any of the keys ``name``,
    ``description``, ``tools``, ``suggestions`` or ``prompt``; one that lacks
    some of them raises ``malformed-blob``. Objects carrying none of the keys
    are skipped and scanned for nested blobs.
    """
    specs: list[AgentSpec] = []
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            break
        decoded = _decode_object(text, start)
        if decoded is None or not isinstance(decoded[0], dict):
            pos = start + 1
            continue
        obj, end = decoded
        present = [k for k in ROLE_KEYS if k in obj]
        if not present:
            pos = start + 1
            continue
        missing = [k for k in ROLE_KEYS if k not in obj]
        if missing:
            raise ParseError("malformed-blob", f"role blob at {start}-{end} lacks {', '.join(missing)}",
                             span=(start, end), missing=missing)
        if not isinstance(obj["name"], str) or not isinstance(obj["tools"], (list, str)):
            raise ParseError("malformed-blob", f"role blob at {start}-{end} has mistyped fields",
                             span=(start, end), missing=[])
        specs.append(AgentSpec.from_blob(obj, origin))
        pos = end
    if not specs:
        raise ParseError("no-blobs-found", "no role JSON blobs in the output")
    return specs


# -- plan steps ---------------------------------------------------------------

_ITEM = re.compile(r"^[ \t]*(?:\*\*)?(?:step[ \t]*(\d+)[ \t]*[.):]|(\d+)[ \t]*[.)])(?:\*\*)?[ \t]+(.*)$",
                   re.IGNORECASE)
_BULLET = re.compile(r"^[ \t]*[-*•][ \t]+\S", re.MULTILINE)
_EXPECTED = re.compile(r"\bexpected[ \t]+outputs?(?:[ \t]+(?:is|are))?[ \t]*[:：-]?[ \t]*", re.IGNORECASE)
_INPUT = re.compile(
    r"\b(?:required[ \t]+|necessary[ \t]+|needed[ \t]+)?inputs?"
    r"(?:[ \t]+(?:needed|required))?(?:[ \t]+for[ \t]+(?:the[ \t]+)?next[ \t]+step)?[ \t]*[:：][ \t]*",
    re.IGNORECASE)


def _marker_field(description: str, marker: re.Pattern, other: re.Pattern) -> str:
    found = marker.search(description)
    if not found:
        return ""
    end = len(description)
    after = other.search(description, found.end())
    if after:
        end = after.start()
    return description[found.end():end].strip()


def _split_inline(index: int, body: str) -> list[tuple[int, str]]:
    """Split ``... sentence. 2. Next item`` run-ons into separate items."""
    items = [(index, body)]
    while True:
        current, rest = items[-1]
        nxt = re.search(rf"(?<=[.!?])\s+{current + 1}\.\s+", rest)
        if not nxt:
            return items
        items[-1] = (current, rest[:nxt.start()])
        items.append((current + 1, rest[nxt.end():]))


def parse_plan_steps(text: str) -> list[PlanStep]:
    raw: list[list] = []
    for line in text.split("\n"):
        item = _ITEM.match(line)
        if item:
            number = int(item.group(1) or item.group(2))
            raw.append([number, item.group(3).strip()])
        elif raw:
            if _MD_HEADER.match(line):
                break
            if line.strip():
                raw[-1][1] += " " + line.strip()
    if not raw:
        if _BULLET.search(text):
            raise ParseError("unnumbered-step", "plan list items must start with a step number")
        raise ParseError("no-steps-found", "no numbered plan steps found")

    steps = []
    for number, body in raw:
        for index, part in _split_inline(number, body):
            agents, description = _split_head(part.strip())
            steps.append(PlanStep(
                index=index,
                assigned_agents=tuple(agents),
                description=description,
                expected_output=_marker_field(description, _EXPECTED, _INPUT),
                required_inputs=_marker_field(description, _INPUT, _EXPECTED),
            ))
    return steps


# -- critiques ----------------------------------------------------------------

_SUGGESTIONS = _header_re({"suggestions": r"suggestions?"})
NO_SUGGESTIONS = "no suggestions"


def parse_critique(text: str) -> Critique:
    headers = _find_headers(text, _SUGGESTIONS, ["suggestions"])
    if not headers:
        raise ParseError("missing-suggestions-section", "no Suggestions section in the critique")
    last = headers[-1]
    terminators = [_Header("md", m.start(), m.start()) for m in _MD_HEADER.finditer(text)]
    body = _body(text, last, terminators)
    verdict = Verdict.NO_SUGGESTIONS if body.casefold() == NO_SUGGESTIONS else Verdict.HAS_SUGGESTIONS
    return Critique(body=body, verdict=verdict)


# -- action observer ----------------------------------------------------------

_OBSERVER_KEYS = {"thought": r"thoughts?", "nextstep": r"next[ \t]*step",
                  "history": r"relevant[ \t]*history"}
_OBSERVER_HEADERS = _header_re(_OBSERVER_KEYS)


@dataclass(frozen=True)
class NextStep:
    agent_names: tuple[str, ...]
    step_text: str
    extracted_history: str = ""
    step_index: int | None = None


def parse_next_step(text: str) -> NextStep:
    headers = _find_headers(text, _OBSERVER_HEADERS, _OBSERVER_KEYS)
    found = [h for h in headers if h.key == "nextstep"]
    if not found:
        raise ParseError("missing-nextstep-section", "no NextStep section in the observer output")
    body = _body(text, found[0], headers)
    history = next((_body(text, h, headers) for h in headers if h.key == "history"), "")
    step_index = None
    prefix = _STEP_PREFIX.match(body)
    if prefix and (prefix.group(1) or prefix.group(2)):
        step_index = int(prefix.group(1) or prefix.group(2))
        body = body[prefix.end():]
    agents, step_text = _split_head(body)
    if not agents:
        raise ParseError("no-agent-named", "NextStep must begin with the expert role name(s) and a colon")
    return NextStep(tuple(agents), step_text, history, step_index)


# -- custom agent actions -----------------------------------------------------

_ACTION_KEYS = {"actioninput": r"action[ \t_]*input", "currentstep": r"current[ \t]*step",
                "action": r"action", "thought": r"thoughts?", "plan": r"plan"}
_ACTION_HEADERS = _header_re(_ACTION_KEYS)
_SECTION_TITLES = {"currentstep": "CurrentStep", "action": "Action", "actioninput": "ActionInput"}


@dataclass(frozen=True)
class AgentActionParse:
    current_step: str
    action: str
    action_input: str
    is_final: bool
    thought: str = ""
    plan: str = ""
    warnings: tuple[str, ...] = field(default=())


def parse_agent_action(text: str, known_tools=None) -> AgentActionParse:
    headers = _find_headers(text, _ACTION_HEADERS, _ACTION_KEYS)
    input_header = next((h for h in headers if h.key == "actioninput"), None)
    before = [h for h in headers if input_header is None or h.start < input_header.start]
    sections: dict[str, str] = {}
    for header in before:
        if header.key not in sections and header.key != "actioninput":
            sections[header.key] = _body(text, header, before + ([input_header] if input_header else []))
    if input_header is not None:
        sections["actioninput"] = text[input_header.content:].strip()
    for key in ("currentstep", "action", "actioninput"):
        if key not in sections:
            raise ParseError("missing-section", f"missing section {_SECTION_TITLES[key]}",
                             section=_SECTION_TITLES[key])
    action_lines = [ln for ln in sections["action"].split("\n") if ln.strip()]
    action = _strip_decoration(action_lines[0]) if action_lines else ""
    if not action:
        raise ParseError("missing-section", "the Action section is empty", section="Action")
    warnings = []
    if known_tools is not None and normalize_name(action) not in {normalize_name(t) for t in known_tools}:
        warnings.append(f"unknown-action:{action}")
    return AgentActionParse(
        current_step=sections["currentstep"],
        action=action,
        action_input=sections["actioninput"],
        is_final=normalize_name(action) == normalize_name(FINAL_OUTPUT),
        thought=sections.get("thought", ""),
        plan=sections.get("plan", ""),
        warnings=tuple(warnings),
    )


# -- Write File payload -------------------------------------------------------

_NAME_LINE = re.compile(r"^>>>(.*)<<<$")


def format_write_file_payload(file_name: str, content: str) -> str:
    return f">>>{file_name}<<<\n>>>>>\n{content}\n<<<<<"


def parse_write_file_payload(action_input: str) -> tuple[str, str]:
    """Parse ``>>>NAME<<<`` / ``>>>>>`` / content / ``<<<<<`` into ``(name, content)``.

    Lines before the name line and after the last closing line are ignored,
    so a surrounding code fence is harmless. Content between the opening and
    the last closing delimiter is returned byte-exact.
    """
    lines = action_input.split("\n")
    name_at = next((i for i, ln in enumerate(lines)
                    if ln.strip() != ">>>>>" and _NAME_LINE.match(ln.strip())), None)
    if name_at is None:
        raise ParseError("malformed-write-file", "missing >>>file name<<< line", delimiter=">>>NAME<<<")
    name = _NAME_LINE.match(lines[name_at].strip()).group(1).strip()
    if not name:
        raise ParseError("malformed-write-file", "empty file name", delimiter=">>>NAME<<<")
    if name_at + 1 >= len(lines) or lines[name_at + 1].strip() != ">>>>>":
        raise ParseError("malformed-write-file", "missing >>>>> line after the file name", delimiter=">>>>>")
    close_at = next((i for i in range(len(lines) - 1, name_at + 1, -1) if lines[i].strip() == "<<<<<"), None)
    if close_at is None:
        raise ParseError("malformed-write-file", "missing closing <<<<< line", delimiter="<<<<<")
    return name, "\n".join(lines[name_at + 2:close_at])
