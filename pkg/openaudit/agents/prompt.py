"""
openaudit/agents/prompt.py — Renders a context pack as one prompt document.

The rendering is a pure function of the pack and the actor name, so the same
pack always produces the same bytes.
"""

from typing import Optional

from jinja2 import Template

from openaudit.playbook import ContextPack

PROMPT_TEMPLATE = """\
You are {{ actor }}, a security audit agent working on one task of a phased audit.
You cannot write files or change state yourself. Reply with exactly one JSON
object (an intention) and nothing else. Any other output is rejected.

## Task
id: {{ task.task_id }}
title: {{ task.title }}
kind: {{ task.kind }}
phase: {{ task.phase }}
{% if task.domain_id %}
domain: {{ task.domain_id }}
{% endif %}
current status: {{ pack.prior_status.value }}
expected action: {{ pack.expected_action.value }}
writable paths: {{ task.boundary | join(", ") }}
{% if agent_outputs %}
required files: {{ agent_outputs | join(", ") }}
{% endif %}

## Intention format
{"action": "claim" | "complete" | "block",
 "task_id": "{{ task.task_id }}",
 "actor": "{{ actor }}",
 "prior_status": "{{ pack.prior_status.value }}",
 "checks": [CheckResult, ...],          (complete only, one per check below)
 "file_updates": [{"path", "content"}], (complete only)
 "findings": [Finding, ...],            (complete only, one or more per failed check)
 "reason": "..."}                       (block only)
CheckResult: {"check_id", "status": "pass" | "fail" | "not_applicable",
  "severity": {"level", "cia_impact": {"confidentiality", "integrity", "availability"}},
  "evidence": [{"path", "line", "excerpt"}], "explanation", "remediation"}
Finding: {"check_id", "severity", "evidence", "explanation", "remediation"}

## Checks
{% for check in pack.checks %}
- {{ check.check_id }} [{{ check.mode }}, default {{ check.default_severity.value }}] {{ check.title }}
{% endfor %}
{% for v in task.verification_checks %}
- {{ v.check_id }} [verification] {{ v.title }}
{% endfor %}
{% if pack.builtin_results %}

## Kernel results (report these statuses unchanged)
{% for r in pack.builtin_results %}
- {{ r.check_id }}: {{ r.status.value }}{% if r.explanation %} ({{ r.explanation }}){% endif %}

{% for e in r.evidence %}
    {{ e.path }}{% if e.line %}:{{ e.line }}{% endif %} {{ e.excerpt }}
{% endfor %}
{% endfor %}
{% endif %}
{% if pack.notes %}

## Notes
{% for note in pack.notes %}
- {{ note }}
{% endfor %}
{% endif %}
{% if pack.feedback %}

## Rejected previous attempts
{% for item in pack.feedback %}
- {{ item }}
{% endfor %}
{% endif %}
{% if pack.dependency_artifacts %}

## Prior phase outputs
{% for a in pack.dependency_artifacts %}
### {{ a.path }} (from {{ a.task_id }})
{{ a.content }}
{% endfor %}
{% endif %}

## Repository excerpts
{% if pack.repo_excerpts %}
{% for x in pack.repo_excerpts %}
### {{ x.path }}{% if x.truncated %} (truncated){% endif %}

{{ x.content }}
{% endfor %}
{% else %}
(no repository excerpts)
{% endif %}
{% if pack.omitted_files %}
({{ pack.omitted_files }} more files omitted by the context budget)
{% endif %}
"""

_TEMPLATE = Template(PROMPT_TEMPLATE, trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)


def render_prompt(pack: ContextPack, actor: Optional[str] = None) -> str:
    """
    Render a context pack as the prompt document sent to a model service.

    Args:
        pack: Context pack for one task
        actor: Agent name the intention must carry (defaults to "agent")

    Returns:
        Prompt text
    """
    agent_outputs = [o.path for o in pack.task.outputs if o.producer == "agent"]
    return _TEMPLATE.render(
        pack=pack,
        task=pack.task,
        actor=actor or "agent",
        agent_outputs=agent_outputs,
    )
