"""
openaudit/report.py — Final report and kernel-produced artifacts.

Every report is a projection of admitted state: the JSON document and the
Markdown report are rendered from the same AuditState, and both refuse
risk inputs computed from a different state. Findings are cited as [E:n],
where n is the sequence of the finding_recorded event.
"""

from collections import defaultdict
from typing import Dict, List, Literal, Optional

from jinja2 import Environment
from pydantic import BaseModel

from openaudit.canonical import canonical_dumps
from openaudit.errors import ReportConsistencyError
from openaudit.playbook import Registry, Task
from openaudit.risk import classify_inventory, consolidate, normalize_path, vuln_id_for
from openaudit.types import (
    SEVERITY_ORDER,
    AuditState,
    MatrixRow,
    RiskAssessment,
    RiskMatrix,
    SecurityScore,
    TaskStatus,
    VulnerabilityRecord,
)

REPORT_SCHEMA_VERSION = "1"
TOP_RISKS = 5
DISCLAIMER = (
    "This assessment reports results for the audited scope only. "
    "It does not prove the absence of vulnerabilities."
)


# ─── JSON document ────────────────────────────────────────────────────────────


class ReportRun(BaseModel):
    run_id: str
    registry_digest: str
    config_digest: str
    initialized_at: str
    generated_at: Optional[str] = None
    last_sequence: Optional[int] = None
    partial: bool


class Coverage(BaseModel):
    domains_total: int
    domains_audited: int
    domains_blocked: List[str]
    checks_total: int
    checks_evaluated: int
    checks_failed: int


class ArtifactIndexEntry(BaseModel):
    path: str
    task_id: Optional[str] = None
    event_sequence: int
    sha256: str
    size: int


class PhaseArtifacts(BaseModel):
    phase: int
    name: str
    artifacts: List[ArtifactIndexEntry]


class CheckRow(BaseModel):
    check_id: str
    domain_id: str
    title: str
    status: Literal["pass", "fail", "not_applicable", "not_evaluated"]
    task_id: Optional[str] = None
    event_sequence: Optional[int] = None
    notice: Optional[str] = None


class BlockedTask(BaseModel):
    task_id: str
    phase: int
    blocked_by: str
    reason: str


class FindingEntry(BaseModel):
    event_sequence: int
    task_id: str
    domain_id: str
    check_id: str
    vuln_id: str
    severity_level: str
    paths: List[str]


class ReportDocument(BaseModel):
    """The structured JSON report (see schemas/report.schema.json)."""
    schema_version: str = REPORT_SCHEMA_VERSION
    run: ReportRun
    state_hash: str
    coverage: Coverage
    artifacts: List[PhaseArtifacts]
    checks: List[CheckRow]
    inventory: List[VulnerabilityRecord]
    matrix: RiskMatrix
    score: SecurityScore
    blocked_tasks: List[BlockedTask]
    findings: List[FindingEntry]


class ReportBundle(BaseModel):
    markdown: str
    json_text: str
    generated_from_state_hash: str
    generated_at: Optional[str] = None


def _require_consistent(state: AuditState, matrix: RiskMatrix, score: SecurityScore, allow_partial: bool) -> None:
    if state.run is None:
        raise ReportConsistencyError("state has no run_initialized event")
    for name, source in (("matrix", matrix.source_state_hash), ("score", score.source_state_hash)):
        if source != state.state_hash:
            raise ReportConsistencyError(
                f"{name} was computed from state {source}, report state is {state.state_hash}"
            )
    if not allow_partial and state.tasks_with(TaskStatus.TODO, TaskStatus.IN_PROGRESS):
        raise ReportConsistencyError("run is not terminal; render it as partial explicitly")


def _domain_gaps(state: AuditState, registry: Registry) -> Dict[str, Task]:
    """Domain id -> its blocked domain-audit task."""
    gaps = {}
    for domain in registry.domains:
        task = registry.domain_task(domain.domain_id)
        if state.tasks[task.task_id].status == TaskStatus.BLOCKED:
            gaps[domain.domain_id] = task
    return gaps


def check_table(state: AuditState, registry: Registry) -> List[CheckRow]:
    """Status of every registry check, in registry order."""
    gaps = _domain_gaps(state, registry)
    rows = []
    for check in registry.checks:
        record = state.check_results.get(check.check_id)
        row = CheckRow(
            check_id=check.check_id,
            domain_id=check.domain_id,
            title=check.title,
            status="not_evaluated",
        )
        if record is not None:
            row.status = record.status.value
            row.task_id = record.task_id
            row.event_sequence = record.event_sequence
        elif check.domain_id in gaps:
            task = gaps[check.domain_id]
            row.status = "not_applicable"
            row.task_id = task.task_id
            row.notice = f"Not evaluated: {task.task_id} blocked ({state.tasks[task.task_id].block_reason})"
        rows.append(row)
    return rows


def _blocked(state: AuditState) -> List[BlockedTask]:
    return [
        BlockedTask(task_id=t.task_id, phase=t.phase, blocked_by=t.owner, reason=t.block_reason)
        for t in state.tasks.values()
        if t.status == TaskStatus.BLOCKED
    ]


def _finding_entries(state: AuditState) -> List[FindingEntry]:
    entries = []
    for recorded in state.findings:
        finding = recorded.finding
        entries.append(
            FindingEntry(
                event_sequence=recorded.event_sequence,
                task_id=recorded.task_id,
                domain_id=recorded.domain_id,
                check_id=finding.check_id,
                vuln_id=vuln_id_for(finding.check_id, normalize_path(finding.evidence[0].path)),
                severity_level=finding.severity.level.value,
                paths=[normalize_path(e.path) for e in finding.evidence],
            )
        )
    return entries


def build_document(
    state: AuditState,
    registry: Registry,
    matrix: RiskMatrix,
    score: SecurityScore,
    allow_partial: bool = False,
) -> ReportDocument:
    """
    Assemble the JSON report document.

    Raises:
        ReportConsistencyError: matrix or score stem from another state, or
            the run is not terminal and allow_partial is False
    """
    _require_consistent(state, matrix, score, allow_partial)
    checks = check_table(state, registry)
    gaps = _domain_gaps(state, registry)
    audited = [
        d.domain_id
        for d in registry.domains
        if state.tasks[registry.domain_task(d.domain_id).task_id].status == TaskStatus.DONE
    ]

    by_phase: Dict[int, List[ArtifactIndexEntry]] = defaultdict(list)
    for entry in sorted(state.artifacts.values(), key=lambda a: (a.path, a.event_sequence)):
        phase = registry.phase_of_path(entry.path) or 0
        by_phase[phase].append(
            ArtifactIndexEntry(
                path=entry.path,
                task_id=entry.written_by_task,
                event_sequence=entry.event_sequence,
                sha256=entry.sha256,
                size=entry.size,
            )
        )
    phase_names = {p.phase: p.name for p in registry.phases}
    artifacts = [
        PhaseArtifacts(phase=phase, name=phase_names.get(phase, "Final"), artifacts=by_phase[phase])
        for phase in sorted(by_phase)
    ]

    run = state.run
    return ReportDocument(
        run=ReportRun(
            run_id=run.run_id,
            registry_digest=run.registry_digest,
            config_digest=run.config_digest,
            initialized_at=run.initialized_at,
            generated_at=state.updated_at,
            last_sequence=state.last_sequence,
            partial=any(t.status != TaskStatus.DONE for t in state.tasks.values()),
        ),
        state_hash=state.state_hash,
        coverage=Coverage(
            domains_total=len(registry.domains),
            domains_audited=len(audited),
            domains_blocked=sorted(gaps),
            checks_total=len(registry.checks),
            checks_evaluated=sum(1 for c in checks if c.event_sequence is not None),
            checks_failed=sum(1 for c in checks if c.status == "fail"),
        ),
        artifacts=artifacts,
        checks=checks,
        inventory=classify_inventory(consolidate(state.findings, registry), registry),
        matrix=matrix,
        score=score,
        blocked_tasks=_blocked(state),
        findings=_finding_entries(state),
    )


def render_json(
    state: AuditState,
    registry: Registry,
    matrix: RiskMatrix,
    score: SecurityScore,
    allow_partial: bool = False,
) -> str:
    """Canonical JSON text of the report document."""
    return canonical_dumps(build_document(state, registry, matrix, score, allow_partial))


# ─── Markdown ─────────────────────────────────────────────────────────────────


def _cell(value) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


_ENV = Environment(trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True, autoescape=False)
_ENV.filters["cell"] = _cell


SUMMARY_TEMPLATE = """\
Security score: **{{ score.value }}/100** (total deduction {{ score.total_deduction }}).

{% if not records %}
No findings were recorded in the audited scope.
{% else %}
| Severity | Count |
|---|---|
{% for d in score.deductions %}
| {{ d.level.value }} | {{ d.count }} |
{% endfor %}

Top risks:

{% for row in top %}
{{ loop.index }}. {{ row.vuln_id }} [{{ row.severity_level.value }}] {{ row.title }} ({{ row.check_id }}, {{ row.domain_id }})
{% endfor %}
{% endif %}
{% if blocked %}

Coverage caveats:

{% for t in blocked %}
- {{ t.task_id }} was blocked ({{ t.reason }}); its scope was not audited.
{% endfor %}
{% endif %}

{% if scope %}
Scope: {{ scope.domains_audited }} of {{ scope.domains_total }} domains and {{ scope.checks_evaluated }} of {{ scope.checks_total }} checks evaluated.
{% endif %}
{{ disclaimer }}
"""

REPORT_TEMPLATE = """\
# Security Audit Report: {{ doc.run.run_id }}

State hash: `{{ doc.state_hash }}`
Generated from event {{ doc.run.last_sequence }} at {{ doc.run.generated_at }}{% if doc.run.partial %} (partial run: not every task completed){% endif %}


## Executive Summary

{{ summary }}

## Scope and Coverage

Domains audited: {{ doc.coverage.domains_audited }} of {{ doc.coverage.domains_total }}.
Checks evaluated: {{ doc.coverage.checks_evaluated }} of {{ doc.coverage.checks_total }} ({{ doc.coverage.checks_failed }} failed).

| Domain | Task | Status | Pass | Fail | Not applicable |
|---|---|---|---|---|---|
{% for d in domains %}
| {{ d.name | cell }} | {{ d.task_id }} | {{ d.status }} | {{ d.passed }} | {{ d.failed }} | {{ d.not_applicable }} |
{% endfor %}

## Findings by Domain

{% for d in domains %}
### {{ d.name }} ({{ d.domain_id }})

{% if d.gap %}
Coverage gap: {{ d.task_id }} was blocked ({{ d.gap }}). The checks of this domain are reported as not_applicable and were not audited.
{% elif not d.records %}
No findings.
{% else %}
{% for r in d.records %}
- **{{ r.vuln_id }}** [{{ r.severity.level.value }}] {{ r.title }} ({{ r.check_ids | join(", ") }}): {{ r.locations | map(attribute="path") | unique | join(", ") }} {% for s in r.event_sequences %}[E:{{ s }}]{% endfor %}

{% endfor %}
{% endif %}

{% endfor %}
## Risk Matrix

{% if matrix_rows %}
| Rank | Vulnerability | Check | Domain | Severity | Impacted CIA | Quick fix | Composite |
|---|---|---|---|---|---|---|---|
{% for row in matrix_rows %}
| {{ loop.index }} | {{ row.vuln_id }} | {{ row.check_id }} | {{ row.domain_id }} | {{ row.severity_level.value }} | {{ row.impact_rank }} | {{ "yes" if row.relevance_rank else "no" }} | {{ row.composite_rank }} |
{% endfor %}
{% else %}
The risk matrix is empty.
{% endif %}

## Technical Remediations

{{ remediations }}

## Best Practices

{{ best_practices }}

## Appendix: Event Citations

{% if doc.findings %}
{% for f in doc.findings %}
- [E:{{ f.event_sequence }}] {{ f.task_id }} {{ f.check_id }} {{ f.severity_level }} {{ f.paths | join(", ") }} ({{ f.vuln_id }})
{% endfor %}
{% else %}
No finding events were recorded.
{% endif %}
"""

REMEDIATIONS_TEMPLATE = """\
{% if not items %}
No remediation is required for the audited scope.
{% else %}
{% for row, record in items %}
### {{ row.vuln_id }}: {{ record.title }} ({{ row.severity_level.value }})

{{ record.remediation }}

Locations:
{% for loc in record.locations %}
- {{ loc.path }}{% if loc.line %}:{{ loc.line }}{% endif %}

{% endfor %}

{% endfor %}
{% endif %}
"""

BEST_PRACTICES_TEMPLATE = """\
{% if not practices %}
No remediation pattern recurs across domains.
{% else %}
{% for p in practices %}
### {{ p.tag }}

Recurs in {{ p.domains | length }} domains: {{ p.domains | join(", ") }}.

{% for c in p.checks %}
- {{ c.check_id }} {{ c.title }}: {{ c.remediation }}
{% endfor %}

{% endfor %}
{% endif %}
"""


class _Practice(BaseModel):
    tag: str
    domains: List[str]
    checks: List[dict]


def recurring_practices(classified: List[VulnerabilityRecord], registry: Registry) -> List[_Practice]:
    """Remediation practice tags failing in at least two domains."""
    domains: Dict[str, set] = defaultdict(set)
    checks: Dict[str, Dict[str, dict]] = defaultdict(dict)
    for record in classified:
        for check_id in record.check_ids:
            check = registry.check(check_id)
            domains[check.practice].add(check.domain_id)
            checks[check.practice][check_id] = {
                "check_id": check_id,
                "title": check.title,
                "remediation": check.remediation,
            }
    return [
        _Practice(tag=tag, domains=sorted(domains[tag]), checks=[checks[tag][c] for c in sorted(checks[tag])])
        for tag in sorted(domains)
        if len(domains[tag]) >= 2
    ]


def render_remediations(matrix: RiskMatrix, classified: List[VulnerabilityRecord]) -> str:
    by_id = {r.vuln_id: r for r in classified}
    items = [(row, by_id[row.vuln_id]) for row in matrix.rows if row.vuln_id in by_id]
    return _ENV.from_string(REMEDIATIONS_TEMPLATE).render(items=items)


def render_best_practices(classified: List[VulnerabilityRecord], registry: Registry) -> str:
    return _ENV.from_string(BEST_PRACTICES_TEMPLATE).render(practices=recurring_practices(classified, registry))


def executive_summary(
    state: AuditState,
    matrix: RiskMatrix,
    score: SecurityScore,
    registry: Optional[Registry] = None,
) -> str:
    """
    Decision-oriented summary: score, severity counts, top risks, caveats.

    The top risks are exactly the first five matrix rows. The text never
    claims that vulnerabilities are absent.
    """
    scope = None
    if registry is not None:
        scope = {
            "domains_audited": sum(
                1
                for d in registry.domains
                if state.tasks[registry.domain_task(d.domain_id).task_id].status == TaskStatus.DONE
            ),
            "domains_total": len(registry.domains),
            "checks_evaluated": sum(1 for c in registry.checks if c.check_id in state.check_results),
            "checks_total": len(registry.checks),
        }
    return _ENV.from_string(SUMMARY_TEMPLATE).render(
        score=score,
        records=matrix.rows,
        top=top_risks(matrix),
        blocked=_blocked(state),
        scope=scope,
        disclaimer=DISCLAIMER,
    )


def top_risks(matrix: RiskMatrix, limit: int = TOP_RISKS) -> List[MatrixRow]:
    return list(matrix.rows[:limit])


def render_markdown(
    state: AuditState,
    registry: Registry,
    matrix: RiskMatrix,
    score: SecurityScore,
    allow_partial: bool = False,
) -> str:
    """
    Human-readable report with a fixed section order.

    Raises:
        ReportConsistencyError: as build_document
    """
    doc = build_document(state, registry, matrix, score, allow_partial)
    by_domain: Dict[str, List[VulnerabilityRecord]] = defaultdict(list)
    for record in doc.inventory:
        by_domain[record.domain_id].append(record)

    rows_by_domain: Dict[str, List[CheckRow]] = defaultdict(list)
    for row in doc.checks:
        rows_by_domain[row.domain_id].append(row)

    domains = []
    for domain in registry.domains:
        task = registry.domain_task(domain.domain_id)
        view = state.tasks[task.task_id]
        rows = rows_by_domain[domain.domain_id]
        domains.append(
            {
                "domain_id": domain.domain_id,
                "name": domain.name,
                "task_id": task.task_id,
                "status": view.status.value,
                "gap": view.block_reason if view.status == TaskStatus.BLOCKED else None,
                "records": by_domain[domain.domain_id],
                "passed": sum(1 for r in rows if r.status == "pass"),
                "failed": sum(1 for r in rows if r.status == "fail"),
                "not_applicable": sum(1 for r in rows if r.status == "not_applicable"),
            }
        )

    return _ENV.from_string(REPORT_TEMPLATE).render(
        doc=doc,
        summary=executive_summary(state, matrix, score, registry),
        domains=domains,
        matrix_rows=matrix.rows,
        remediations=render_remediations(matrix, doc.inventory),
        best_practices=render_best_practices(doc.inventory, registry),
    )


def render_bundle(
    state: AuditState,
    registry: Registry,
    assessment: RiskAssessment,
    allow_partial: bool = False,
) -> ReportBundle:
    """Markdown and JSON rendered from one state."""
    return ReportBundle(
        markdown=render_markdown(state, registry, assessment.matrix, assessment.score, allow_partial),
        json_text=render_json(state, registry, assessment.matrix, assessment.score, allow_partial),
        generated_from_state_hash=state.state_hash,
        generated_at=state.updated_at,
    )


# ─── Kernel artifacts ─────────────────────────────────────────────────────────


def _domain_results(task: Task, state: AuditState, registry: Registry) -> str:
    checks = [
        {
            "check_id": check.check_id,
            "status": state.check_results[check.check_id].status.value,
            "event_sequence": state.check_results[check.check_id].event_sequence,
        }
        for check in registry.checks_for(task)
        if check.check_id in state.check_results
    ]
    findings = [f.event_sequence for f in state.findings if f.task_id == task.task_id]
    return canonical_dumps(
        {"task_id": task.task_id, "domain_id": task.domain_id, "checks": checks, "finding_events": findings}
    )


def _severity_table(assessment: RiskAssessment, registry: Registry) -> str:
    reported = {r.vuln_id: r.severity.level.value for r in assessment.inventory}
    rows = [
        {
            "vuln_id": r.vuln_id,
            "check_id": r.check_ids[0],
            "default_level": registry.check(r.check_ids[0]).default_severity.value,
            "reported_level": reported[r.vuln_id],
            "classified_level": r.severity.level.value,
            "cia_impact": r.severity.cia_impact.model_dump(mode="json"),
        }
        for r in assessment.classified
    ]
    counts = {level.value: 0 for level in reversed(SEVERITY_ORDER)}
    for r in assessment.classified:
        counts[r.severity.level.value] += 1
    return canonical_dumps({"source_state_hash": assessment.source_state_hash, "counts": counts, "records": rows})


def render_kernel_artifact(
    artifact: str,
    task: Task,
    state: AuditState,
    registry: Registry,
    assessment: RiskAssessment,
) -> str:
    """
    Content of one kernel-produced task output.

    Raises:
        ValueError: Unknown artifact name
    """
    if artifact == "check_results":
        return _domain_results(task, state, registry)
    if artifact == "inventory":
        return canonical_dumps(
            {"source_state_hash": assessment.source_state_hash, "records": assessment.inventory}
        )
    if artifact == "severity":
        return _severity_table(assessment, registry)
    if artifact == "risk_matrix":
        return canonical_dumps(assessment.matrix)
    if artifact == "remediations":
        return "# Technical Remediations\n\n" + render_remediations(assessment.matrix, assessment.classified)
    if artifact == "best_practices":
        return "# Best Practices\n\n" + render_best_practices(assessment.classified, registry)
    if artifact == "executive_summary":
        return "# Executive Summary\n\n" + executive_summary(state, assessment.matrix, assessment.score, registry)
    if artifact == "score":
        return canonical_dumps(assessment.score)
    if artifact == "final_report_markdown":
        return render_bundle(state, registry, assessment, allow_partial=True).markdown
    if artifact == "final_report_json":
        return render_bundle(state, registry, assessment, allow_partial=True).json_text
    raise ValueError(f"unknown kernel artifact: {artifact}")
