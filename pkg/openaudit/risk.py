"""
openaudit/risk.py — From check-level findings to a scored risk picture.

The cascade is: consolidate findings into a vulnerability inventory,
classify each record's severity, order the records in a risk matrix, and
compute a 0-100 security score. Every step is a pure function; weights
come from the registry.
"""

import posixpath
from typing import Dict, List, Optional, Sequence, Tuple

from openaudit.canonical import sha256_hex
from openaudit.errors import ConsolidationError
from openaudit.logs import get_logger
from openaudit.playbook import Registry
from openaudit.types import (
    IMPACT_RANK,
    SEVERITY_ORDER,
    SEVERITY_RANK,
    AuditState,
    CIAImpact,
    EvidenceLocation,
    Impact,
    MatrixRow,
    RecordedFinding,
    RiskAssessment,
    RiskMatrix,
    ScoreDeduction,
    SecurityScore,
    Severity,
    SeverityLevel,
    VulnerabilityRecord,
)

log = get_logger(__name__)

DEFAULT_WEIGHTS: Dict[SeverityLevel, int] = {
    SeverityLevel.CRITICAL: 25,
    SeverityLevel.HIGH: 10,
    SeverityLevel.MEDIUM: 4,
    SeverityLevel.LOW: 1,
    SeverityLevel.INFO: 0,
}


def normalize_path(path: str) -> str:
    """Relative POSIX form used to group findings by file."""
    normalized = posixpath.normpath(path.replace("\\", "/"))
    while normalized.startswith("./"):
        normalized = normalized[2:]
    return normalized.lstrip("/")


def vuln_id_for(check_id: str, primary_path: str) -> str:
    """Stable id derived from (check_id, normalized primary location)."""
    return "V-" + sha256_hex(f"{check_id}\n{primary_path}".encode("utf-8"))[:12]


def _max_impact(a: Impact, b: Impact) -> Impact:
    return a if IMPACT_RANK[a] >= IMPACT_RANK[b] else b


def merge_severity(severities: Sequence[Severity]) -> Severity:
    """Least upper bound: maximum level and per-dimension maximum impact."""
    level = max((s.level for s in severities), key=lambda lv: SEVERITY_RANK[lv])
    cia = CIAImpact()
    for s in severities:
        cia = CIAImpact(
            confidentiality=_max_impact(cia.confidentiality, s.cia_impact.confidentiality),
            integrity=_max_impact(cia.integrity, s.cia_impact.integrity),
            availability=_max_impact(cia.availability, s.cia_impact.availability),
        )
    if level == SeverityLevel.INFO:
        cia = CIAImpact()
    return Severity(level=level, cia_impact=cia)


def _location_key(loc: EvidenceLocation) -> Tuple[str, int]:
    return (normalize_path(loc.path), loc.line or 0)


def consolidate(findings: Sequence[RecordedFinding], registry: Registry) -> List[VulnerabilityRecord]:
    """
    Group findings into vulnerability records.

    Findings sharing (check_id, normalized primary path) become one record
    with merged evidence and the maximum severity among them. Records are
    ordered by the event sequence that first reported them.

    Raises:
        ConsolidationError: A finding references a check the registry lacks
    """
    groups: Dict[Tuple[str, str], List[RecordedFinding]] = {}
    for recorded in findings:
        check_id = recorded.finding.check_id
        if not registry.has_check(check_id):
            raise ConsolidationError(
                f"finding at event {recorded.event_sequence} references unknown check {check_id}"
            )
        primary = normalize_path(recorded.finding.evidence[0].path)
        groups.setdefault((check_id, primary), []).append(recorded)

    records = []
    for (check_id, primary), members in groups.items():
        check = registry.check(check_id)
        seen = set()
        locations = []
        for member in members:
            for loc in member.finding.evidence:
                key = _location_key(loc)
                if key in seen:
                    continue
                seen.add(key)
                locations.append(EvidenceLocation(path=key[0], line=loc.line, excerpt=loc.excerpt))
        locations.sort(key=_location_key)
        sequences = sorted(m.event_sequence for m in members)
        records.append(
            VulnerabilityRecord(
                vuln_id=vuln_id_for(check_id, primary),
                check_ids=[check_id],
                domain_id=check.domain_id,
                title=check.title,
                severity=merge_severity([m.finding.severity for m in members]),
                locations=locations,
                remediation=members[0].finding.remediation,
                first_event_sequence=sequences[0],
                event_sequences=sequences,
            )
        )
    records.sort(key=lambda r: (r.first_event_sequence, r.vuln_id))
    return records


def classify(record: VulnerabilityRecord, registry: Registry) -> Severity:
    """
    Severity of a record under the registry's rules.

    Start from the check's default severity and raise it one level when the
    record has full confidentiality or integrity impact. An INFO result
    with any impact is raised to LOW so INFO always means no impact.
    Idempotent: classifying an already classified record changes nothing.
    """
    check = registry.check(record.check_ids[0])
    rank = SEVERITY_RANK[check.default_severity]
    cia = record.severity.cia_impact
    if Impact.FULL in (cia.confidentiality, cia.integrity):
        rank = min(rank + 1, len(SEVERITY_ORDER) - 1)
    level = SEVERITY_ORDER[rank]
    if level == SeverityLevel.INFO and any(d != Impact.NONE for d in cia.dimensions()):
        level = SeverityLevel.LOW
    return Severity(level=level, cia_impact=cia)


def classify_inventory(inventory: Sequence[VulnerabilityRecord], registry: Registry) -> List[VulnerabilityRecord]:
    return [r.model_copy(update={"severity": classify(r, registry)}) for r in inventory]


def build_matrix(inventory: Sequence[VulnerabilityRecord], quick_fix_threshold: int = 3) -> RiskMatrix:
    """
    Order records by severity, impact and remediation relevance.

    Each row compares (severity rank, count of impacted CIA dimensions,
    quick-fix relevance) lexicographically, highest first; ties go to the
    smaller vuln_id. Relevance is 1 when the record has remediation text
    and at most `quick_fix_threshold` locations.
    """
    rows = []
    for record in inventory:
        severity_rank = SEVERITY_RANK[record.severity.level]
        impact_rank = sum(1 for d in record.severity.cia_impact.dimensions() if d != Impact.NONE)
        relevance = 1 if record.remediation.strip() and len(record.locations) <= quick_fix_threshold else 0
        rows.append(
            MatrixRow(
                vuln_id=record.vuln_id,
                check_id=record.check_ids[0],
                domain_id=record.domain_id,
                title=record.title,
                severity_level=record.severity.level,
                severity_rank=severity_rank,
                impact_rank=impact_rank,
                relevance_rank=relevance,
                composite_rank=severity_rank * 100 + impact_rank * 10 + relevance,
            )
        )
    rows.sort(key=lambda r: (-r.severity_rank, -r.impact_rank, -r.relevance_rank, r.vuln_id))
    return RiskMatrix(rows=rows)


def compute_score(
    inventory: Sequence[VulnerabilityRecord],
    weights: Optional[Dict[SeverityLevel, int]] = None,
) -> SecurityScore:
    """
    100 minus weighted severity counts, clamped to [0, 100].

    Example:
        1 HIGH + 2 MEDIUM + 3 LOW with default weights -> 100 - 10 - 8 - 3 = 79
    """
    weights = weights or DEFAULT_WEIGHTS
    counts = {level: 0 for level in SEVERITY_ORDER}
    for record in inventory:
        counts[record.severity.level] += 1

    deductions = []
    total = 0
    for level in reversed(SEVERITY_ORDER):
        weight = weights.get(level, DEFAULT_WEIGHTS[level])
        points = counts[level] * weight
        total += points
        deductions.append(ScoreDeduction(level=level, count=counts[level], weight=weight, points=points))
    value = max(0, min(100, 100 - total))
    return SecurityScore(value=value, deductions=deductions, total_deduction=total)


def assess(state: AuditState, registry: Registry, quick_fix_threshold: int = 3) -> RiskAssessment:
    """Run the whole cascade on a state and stamp results with its hash."""
    inventory = consolidate(state.findings, registry)
    classified = classify_inventory(inventory, registry)
    matrix = build_matrix(classified, quick_fix_threshold)
    matrix.source_state_hash = state.state_hash
    score = compute_score(classified, registry.score_weights)
    score.source_state_hash = state.state_hash
    log.debug("risk_assessed", records=len(classified), score=score.value)
    return RiskAssessment(
        source_state_hash=state.state_hash,
        inventory=inventory,
        classified=classified,
        matrix=matrix,
        score=score,
    )
