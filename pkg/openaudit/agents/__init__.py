"""
openaudit.agents — Untrusted producers of intention text.

Modules:
    base.py          — AgentBinding, AgentOutput, BaseAgent, create_agent
    scripted.py      — ScriptedAgent replaying pre-authored outputs
    model_service.py — ModelServiceAgent over HTTP or the openai client
    prompt.py        — render_prompt for model-service dispatches
"""

from openaudit.agents.base import AgentBinding, AgentOutput, BaseAgent, create_agent
from openaudit.agents.model_service import API_KEY_ENV, ModelServiceAgent
from openaudit.agents.prompt import render_prompt
from openaudit.agents.scripted import ScriptedAgent, load_script, parse_script

__all__ = [
    "AgentBinding",
    "AgentOutput",
    "BaseAgent",
    "create_agent",
    "ScriptedAgent",
    "load_script",
    "parse_script",
    "ModelServiceAgent",
    "API_KEY_ENV",
    "render_prompt",
]
