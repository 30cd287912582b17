"""Run configuration: defaults, an INI config file, and command-line overrides."""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

BACKENDS = ("http", "scripted", "replay")
SECTION = "run"
API_KEY_ENV = "AUTOTEAM_API_KEY"

# keys that shape model traffic; these go into the run-start trace event
PROTOCOL_KEYS = ("model", "temperature", "drafting_rounds", "refinement_cap", "collab_rounds",
                 "forced_final", "max_synthesized", "reprompt_budget", "budget", "max_tokens")


@dataclass
class RunConfig:
    backend: str = "http"
    model: str = "gpt-4"
    base_url: str = "https://api.openai.com/v1"
    temperature: float = 0.0
    drafting_rounds: int = 3
    refinement_cap: int = 5
    collab_rounds: int = 5
    forced_final: bool = True
    max_synthesized: int = 2
    reprompt_budget: int = 2
    budget: int = 6000
    max_tokens: int | None = None
    retry_attempts: int = 3
    workspace: str = "workspace"
    trace: str = "trace.jsonl"
    role_library: str | None = None
    script: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}, got {self.backend!r}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ConfigError(f"temperature must lie in [0, 1], got {self.temperature}")
        for key in ("drafting_rounds", "refinement_cap", "collab_rounds", "budget", "retry_attempts"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        for key in ("max_synthesized", "reprompt_budget"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0")

    def protocol(self) -> dict:
        data = asdict(self)
        return {k: data[k] for k in PROTOCOL_KEYS}

    def merged(self, overrides: dict) -> "RunConfig":
        """Copy with every non-None override applied."""
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None and k in data})
        return RunConfig(**data)


def _coerce(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if "bool" in kind:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def load_config_file(path: str | os.PathLike) -> dict:
    """Read the ``[run]`` section of an INI file into RunConfig keyword values."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section(SECTION):
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, raw in parser.items(SECTION):
        key = key.replace("-", "_")
        if key == "api_key":
            raise ConfigError(f"the API key is read from ${API_KEY_ENV} only")
        if key not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def resolve_config(flags: dict, config_path: str | os.PathLike | None = None) -> RunConfig:
    """Defaults, then the config file, then flags; later sources win."""
    config = RunConfig()
    if config_path is not None:
        config = config.merged(load_config_file(config_path))
    return config.merged(flags)


def api_key() -> str | None:
    return os.environ.get(API_KEY_ENV)


def ensure_parent(path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
