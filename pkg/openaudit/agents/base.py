"""
openaudit/agents/base.py — Agent binding and the base agent interface.

Agents are untrusted producers of raw intention text. They never write files
or append events; the orchestrator does that after validation.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

if TYPE_CHECKING:
    from openaudit.playbook import ContextPack


class AgentBinding(BaseModel):
    """
    How to reach one agent.

    Attributes:
        name: Agent identity; intentions must carry it as their actor
        kind: "scripted" or "model_service"
        script_path: JSON script (scripted only)
        endpoint: Model service URL (model_service only)
        model: Model identifier (model_service only)
        timeout_seconds: Request timeout per attempt
        max_retries: Extra attempts after a failed request
        retry_backoff_seconds: Pause between attempts
        api: Wire shape of the service: "minimal" ({model, prompt} -> {text})
            or "openai" (chat completions)
    """
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    kind: Literal["scripted", "model_service"]
    script_path: Optional[Path] = None
    endpoint: Optional[str] = None
    model: Optional[str] = None
    timeout_seconds: float = Field(default=60.0, gt=0)
    max_retries: int = Field(default=2, ge=0, le=10)
    retry_backoff_seconds: float = Field(default=0.5, ge=0)
    api: Literal["minimal", "openai"] = "minimal"

    @model_validator(mode="after")
    def _exactly_one_configuration(self):
        scripted = self.script_path is not None
        service = self.endpoint is not None or self.model is not None
        if self.kind == "scripted" and (not scripted or service):
            raise ValueError(f"agent {self.name}: scripted bindings take script_path only")
        if self.kind == "model_service" and (scripted or self.endpoint is None or self.model is None):
            raise ValueError(f"agent {self.name}: model_service bindings need endpoint and model only")
        return self


class AgentOutput(BaseModel):
    """Raw agent text, recorded verbatim before any parsing."""
    raw_text: str
    latency_ms: int = Field(ge=0)
    attempt: int = Field(ge=1)


class BaseAgent(ABC):
    """
    Abstract base class for all agents.

    Implementations turn a context pack into raw text and nothing more.
    """

    name: str

    @abstractmethod
    def dispatch(self, pack: "ContextPack") -> AgentOutput:
        """
        Produce raw intention text for a context pack.

        Args:
            pack: Purified context for one task

        Returns:
            AgentOutput with the verbatim response

        Raises:
            DispatchError: If no output can be produced
        """
        pass


def create_agent(binding: AgentBinding) -> BaseAgent:
    """Instantiate the agent implementation a binding describes."""
    if binding.kind == "scripted":
        from openaudit.agents.scripted import ScriptedAgent

        return ScriptedAgent.from_binding(binding)
    from openaudit.agents.model_service import ModelServiceAgent

    return ModelServiceAgent(binding)
