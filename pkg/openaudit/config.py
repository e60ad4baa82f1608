"""
openaudit/config.py — Run configuration.

A RunConfig is read once, at init, from a JSON file. Its snapshot (everything
except agent bindings) is recorded in run_initialized; agent bindings are
kept beside the log in agents.json because agents are replaceable producers
of raw text and must not influence the hash chain.
"""

import json
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from openaudit.agents.base import AgentBinding
from openaudit.clock import Clock, FixedClock, SystemClock, parse_timestamp
from openaudit.errors import ConfigError

DEFAULT_AGENT_KEY = "default"


class RunConfig(BaseModel):
    """
    Configuration of one audit run.

    Attributes:
        repo_root: Repository under audit (read-only)
        optional_docs_dir: Extra documentation offered to recon tasks
        registry_path: Registry document; the shipped one when absent
        agents: Task kind -> agent binding; "default" is the fallback
        max_repair_attempts: Re-dispatches after a rejection before blocking
        context_byte_budget: Repository bytes allowed in one context pack
        quick_fix_threshold: Location count up to which a fix counts as quick
        clock_mode: "system" or "fixed" (deterministic timestamps)
        fixed_start: First timestamp of the fixed clock
        fixed_step_seconds: Fixed clock increment per event
        builtin_workers: Threads used for builtin checks
    """
    model_config = ConfigDict(extra="forbid")

    repo_root: Path
    optional_docs_dir: Optional[Path] = None
    registry_path: Optional[Path] = None
    agents: Dict[str, AgentBinding]
    max_repair_attempts: int = Field(default=2, ge=1, le=5)
    context_byte_budget: int = Field(default=65536, ge=256)
    quick_fix_threshold: int = Field(default=3, ge=0)
    clock_mode: Literal["system", "fixed"] = "system"
    fixed_start: str = "2026-01-01T00:00:00Z"
    fixed_step_seconds: int = Field(default=1, ge=1)
    builtin_workers: int = Field(default=4, ge=1, le=32)

    @field_validator("agents")
    @classmethod
    def _has_default(cls, agents: Dict[str, AgentBinding]) -> Dict[str, AgentBinding]:
        if DEFAULT_AGENT_KEY not in agents:
            raise ValueError('agents must include a "default" binding')
        return agents

    @field_validator("fixed_start")
    @classmethod
    def _utc_timestamp(cls, value: str) -> str:
        parse_timestamp(value)
        return value


def _resolve(base: Path, value: Optional[Path]) -> Optional[Path]:
    if value is None:
        return None
    return value if value.is_absolute() else (base / value).resolve()


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a config file.

    Relative paths resolve against the config file's directory.

    Raises:
        ConfigError: Unreadable file, invalid fields, or missing paths
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"invalid config {path}: {loc}: {first['msg']}") from e

    base = path.parent.resolve()
    agents = {
        key: binding.model_copy(update={"script_path": _resolve(base, binding.script_path)})
        for key, binding in config.agents.items()
    }
    config = config.model_copy(
        update={
            "repo_root": _resolve(base, config.repo_root),
            "optional_docs_dir": _resolve(base, config.optional_docs_dir),
            "registry_path": _resolve(base, config.registry_path),
            "agents": agents,
        }
    )
    check_paths(config)
    return config


def check_paths(config: RunConfig) -> None:
    if not config.repo_root.is_dir():
        raise ConfigError(f"repo_root is not a directory: {config.repo_root}")
    if config.optional_docs_dir is not None and not config.optional_docs_dir.is_dir():
        raise ConfigError(f"optional_docs_dir is not a directory: {config.optional_docs_dir}")
    if config.registry_path is not None and not config.registry_path.is_file():
        raise ConfigError(f"registry_path not found: {config.registry_path}")
    for key, binding in config.agents.items():
        if binding.script_path is not None and not binding.script_path.is_file():
            raise ConfigError(f"agent {key}: script not found: {binding.script_path}")


def binding_for(agents: Dict[str, AgentBinding], kind: str) -> AgentBinding:
    """Binding for a task kind, falling back to the default binding."""
    return agents.get(kind) or agents[DEFAULT_AGENT_KEY]


def snapshot(config: RunConfig) -> Dict[str, Any]:
    """Config as recorded in run_initialized (agent bindings excluded)."""
    return config.model_dump(mode="json", exclude={"agents"})


def config_from_snapshot(data: Dict[str, Any], agents: Dict[str, AgentBinding]) -> RunConfig:
    try:
        return RunConfig.model_validate({**data, "agents": agents})
    except ValidationError as e:
        raise ConfigError(f"recorded config is invalid: {e.errors()[0]['msg']}") from e


def dump_agents(agents: Dict[str, AgentBinding]) -> Dict[str, Any]:
    return {key: b.model_dump(mode="json", exclude_none=True) for key, b in agents.items()}


def load_agents(path: Union[str, Path]) -> Dict[str, AgentBinding]:
    """Read agent bindings stored beside a run's log."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return {key: AgentBinding.model_validate(value) for key, value in data.items()}
    except (OSError, json.JSONDecodeError, AttributeError) as e:
        raise ConfigError(f"cannot read agent bindings {path}: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"invalid agent binding in {path}: {e.errors()[0]['msg']}") from e


def make_clock(config: RunConfig, events_so_far: int = 0) -> Clock:
    """Clock for a run; a fixed clock resumes after the events already logged."""
    return recorded_clock(snapshot(config), events_so_far)


def recorded_clock(recorded: Dict[str, Any], events_so_far: int = 0) -> Clock:
    """Clock described by a config snapshot taken from run_initialized."""
    if recorded.get("clock_mode") == "fixed":
        return FixedClock(
            recorded.get("fixed_start", "2026-01-01T00:00:00Z"),
            step_seconds=recorded.get("fixed_step_seconds", 1),
            ticks=events_so_far,
        )
    return SystemClock()
