"""
OpenAudit — Fail-closed, event-sourced security audits driven by agents.

Agents propose intentions; the kernel validates them, appends admitted
events to a hash-chained log, and projects every view, report and score
from that log.
"""

__version__ = "0.1.0"

from openaudit.agents import AgentBinding, BaseAgent, ModelServiceAgent, ScriptedAgent, create_agent
from openaudit.config import RunConfig, load_config
from openaudit.event_store import EventLog, read_all, verify_chain
from openaudit.orchestrator import (
    cmd_export_script,
    cmd_init,
    cmd_report,
    cmd_run,
    cmd_status,
    cmd_unblock,
    cmd_verify,
)
from openaudit.playbook import Registry, build_context, load_registry
from openaudit.projection import project, replay_verify
from openaudit.protocol import Intention, Rejection, RejectionCode, parse_intention, validate
from openaudit.risk import assess, build_matrix, classify, compute_score, consolidate
from openaudit.report import render_bundle, render_json, render_markdown
from openaudit.types import AuditState, Event, RunOutcome, RunStatus

__all__ = [
    "AgentBinding",
    "BaseAgent",
    "ModelServiceAgent",
    "ScriptedAgent",
    "create_agent",
    "RunConfig",
    "load_config",
    "EventLog",
    "read_all",
    "verify_chain",
    "cmd_init",
    "cmd_run",
    "cmd_verify",
    "cmd_status",
    "cmd_report",
    "cmd_unblock",
    "cmd_export_script",
    "Registry",
    "load_registry",
    "build_context",
    "project",
    "replay_verify",
    "Intention",
    "Rejection",
    "RejectionCode",
    "parse_intention",
    "validate",
    "consolidate",
    "classify",
    "build_matrix",
    "compute_score",
    "assess",
    "render_bundle",
    "render_json",
    "render_markdown",
    "AuditState",
    "Event",
    "RunOutcome",
    "RunStatus",
]
