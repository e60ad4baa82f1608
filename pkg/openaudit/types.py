"""
openaudit/types.py — Core data models shared across the audit kernel.

This module defines the foundational types used throughout the pipeline:
- Event, EventBody, EventDraft, ChainReport: the append-only log
- Severity, Finding, CheckResult: check-level security results
- TaskView, AuditState, VerificationResult: projected read models
- VulnerabilityRecord, RiskMatrix, SecurityScore: the risk cascade
- RunOutcome: the result of one orchestrator run

Registry records live in openaudit.playbook, intentions and rejections in
openaudit.protocol, and the JSON report document in openaudit.report.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

HEX64 = r"^[0-9a-f]{64}$"


class EventKind(str, Enum):
    RUN_INITIALIZED = "run_initialized"
    TASK_CLAIMED = "task_claimed"
    TASK_COMPLETED = "task_completed"
    TASK_BLOCKED = "task_blocked"
    TASK_UNBLOCKED = "task_unblocked"
    FINDING_RECORDED = "finding_recorded"
    ARTIFACT_WRITTEN = "artifact_written"
    PHASE_ADVANCED = "phase_advanced"
    VERIFICATION_RECORDED = "verification_recorded"


class TaskStatus(str, Enum):
    TODO = "todo"
    IN_PROGRESS = "in_progress"
    DONE = "done"
    BLOCKED = "blocked"


class Action(str, Enum):
    CLAIM = "claim"
    COMPLETE = "complete"
    BLOCK = "block"


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


class SeverityLevel(str, Enum):
    CRITICAL = "CRITICAL"
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"
    INFO = "INFO"


class Impact(str, Enum):
    NONE = "none"
    PARTIAL = "partial"
    FULL = "full"


class RunStatus(str, Enum):
    VERIFIED_COMPLETE = "verified_complete"
    COMPLETE_WITH_BLOCKED = "complete_with_blocked"
    ABORTED = "aborted"


# Ordered from least to most severe; used by risk ranking and consolidation.
SEVERITY_ORDER: List[SeverityLevel] = [
    SeverityLevel.INFO,
    SeverityLevel.LOW,
    SeverityLevel.MEDIUM,
    SeverityLevel.HIGH,
    SeverityLevel.CRITICAL,
]
SEVERITY_RANK: Dict[SeverityLevel, int] = {level: i for i, level in enumerate(SEVERITY_ORDER)}
IMPACT_RANK: Dict[Impact, int] = {Impact.NONE: 0, Impact.PARTIAL: 1, Impact.FULL: 2}


# ─── Event log ────────────────────────────────────────────────────────────────


class EventDraft(BaseModel):
    """An event proposed by validation, before it is stamped and chained."""
    kind: EventKind
    actor: str = Field(min_length=1)
    payload: Dict[str, Any] = {}


class EventBody(BaseModel):
    """
    Event content handed to the log for appending.

    The log assigns sequence, prev_hash and hash.
    """
    timestamp: str
    kind: EventKind
    actor: str = Field(min_length=1)
    payload: Dict[str, Any] = {}


class Event(BaseModel):
    """
    One admitted, hash-chained fact in events.jsonl.

    Attributes:
        sequence: Position in the log, equal to the line index
        timestamp: UTC ISO-8601 text
        actor: Identifier of whoever caused the event
        kind: Event kind
        payload: Kind-specific map
        prev_hash: Hash of the previous event (64 zeros for event 0)
        hash: SHA-256 over prev_hash bytes and the canonical event without hash
    """
    model_config = ConfigDict(extra="forbid")

    sequence: int = Field(ge=0)
    timestamp: str
    actor: str = Field(min_length=1)
    kind: EventKind
    payload: Dict[str, Any]
    prev_hash: str = Field(pattern=HEX64)
    hash: str = Field(pattern=HEX64)


class ChainReport(BaseModel):
    """Outcome of re-checking every hash link of a log."""
    valid: bool
    first_bad_sequence: Optional[int] = None
    events_checked: int = 0
    detail: Optional[str] = None

    @model_validator(mode="after")
    def _valid_iff_no_bad_sequence(self):
        if self.valid != (self.first_bad_sequence is None):
            raise ValueError("valid must be true exactly when first_bad_sequence is absent")
        return self


# ─── Check results ────────────────────────────────────────────────────────────


class CIAImpact(BaseModel):
    model_config = ConfigDict(extra="forbid")

    confidentiality: Impact = Impact.NONE
    integrity: Impact = Impact.NONE
    availability: Impact = Impact.NONE

    def dimensions(self) -> List[Impact]:
        return [self.confidentiality, self.integrity, self.availability]


class Severity(BaseModel):
    """Severity level plus the CIA reasoning behind it."""
    model_config = ConfigDict(extra="forbid")

    level: SeverityLevel
    cia_impact: CIAImpact = CIAImpact()

    @model_validator(mode="after")
    def _info_has_no_impact(self):
        if self.level == SeverityLevel.INFO and any(
            d != Impact.NONE for d in self.cia_impact.dimensions()
        ):
            raise ValueError("INFO severity must carry no CIA impact")
        return self


class EvidenceLocation(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str = Field(min_length=1)
    line: Optional[int] = Field(default=None, ge=1)
    excerpt: str = ""


class Finding(BaseModel):
    """
    A security finding reported under a failed check.

    Attributes:
        check_id: Registry check the finding belongs to
        severity: Reported severity with CIA impact
        evidence: Code or configuration locations (at least one)
        explanation: Technical explanation
        remediation: Remediation guidance
    """
    model_config = ConfigDict(extra="forbid")

    check_id: str = Field(min_length=1)
    severity: Severity
    evidence: List[EvidenceLocation] = Field(min_length=1)
    explanation: str = Field(min_length=1)
    remediation: str = Field(min_length=1)


class CheckResult(BaseModel):
    """Status of one check as evaluated for a task."""
    model_config = ConfigDict(extra="forbid")

    check_id: str = Field(min_length=1)
    status: CheckStatus
    severity: Optional[Severity] = None
    evidence: List[EvidenceLocation] = []
    explanation: str = ""
    remediation: str = ""

    @model_validator(mode="after")
    def _fail_is_substantiated(self):
        if self.status == CheckStatus.FAIL:
            if self.severity is None:
                raise ValueError("a failed check requires a severity")
            if not self.evidence:
                raise ValueError("a failed check requires evidence")
            if not self.remediation.strip():
                raise ValueError("a failed check requires remediation guidance")
        return self


# ─── Projected state ──────────────────────────────────────────────────────────


class RunInfo(BaseModel):
    run_id: str
    registry_digest: str
    config_digest: str
    initialized_at: str
    docs_dir_provided: bool = False


class TaskView(BaseModel):
    """
    Projected status of one task.

    Owner is present exactly when the task left todo; block_reason exactly
    when it is blocked.
    """
    task_id: str
    status: TaskStatus = TaskStatus.TODO
    owner: Optional[str] = None
    phase: int = Field(ge=1, le=4)
    kind: str
    block_reason: Optional[str] = None

    @model_validator(mode="after")
    def _owner_and_reason_follow_status(self):
        owned = self.status != TaskStatus.TODO
        if owned != (self.owner is not None):
            raise ValueError(f"owner must be present iff status is not todo ({self.task_id})")
        if (self.status == TaskStatus.BLOCKED) != (self.block_reason is not None):
            raise ValueError(f"block_reason must be present iff blocked ({self.task_id})")
        return self


class RecordedFinding(BaseModel):
    task_id: str
    domain_id: str
    event_sequence: int
    finding: Finding


class CheckRecord(BaseModel):
    check_id: str
    status: CheckStatus
    task_id: str
    event_sequence: int


class ArtifactEntry(BaseModel):
    path: str
    written_by_task: Optional[str] = None
    event_sequence: int
    sha256: str
    size: int = 0


class AuditState(BaseModel):
    """
    Current audit state, a pure fold over the admitted log.

    state_hash is the SHA-256 of the canonical state with state_hash absent.
    """
    run: Optional[RunInfo] = None
    tasks: Dict[str, TaskView] = {}
    current_phase: int = 1
    findings: List[RecordedFinding] = []
    check_results: Dict[str, CheckRecord] = {}
    artifacts: Dict[str, ArtifactEntry] = {}
    last_sequence: Optional[int] = None
    updated_at: Optional[str] = None
    state_hash: str = ""

    def tasks_with(self, *statuses: TaskStatus) -> List[TaskView]:
        return [t for t in self.tasks.values() if t.status in statuses]


class VerificationResult(BaseModel):
    chain: ChainReport
    state_hash: Optional[str] = None
    # None when the log carries no verification_recorded event
    matches_recorded: Optional[bool] = None
    recorded_hash: Optional[str] = None
    # Set when a verified chain cannot be projected against the registry
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.chain.valid and self.error is None and self.matches_recorded is not False


# ─── Risk cascade ─────────────────────────────────────────────────────────────


class VulnerabilityRecord(BaseModel):
    """A system-level vulnerability consolidated from one or more findings."""
    vuln_id: str
    check_ids: List[str]
    domain_id: str
    title: str = ""
    severity: Severity
    locations: List[EvidenceLocation]
    remediation: str = ""
    first_event_sequence: int
    event_sequences: List[int]


class MatrixRow(BaseModel):
    vuln_id: str
    check_id: str
    domain_id: str
    title: str = ""
    severity_level: SeverityLevel
    severity_rank: int
    impact_rank: int
    relevance_rank: int
    composite_rank: int


class RiskMatrix(BaseModel):
    rows: List[MatrixRow] = []
    source_state_hash: Optional[str] = None


class ScoreDeduction(BaseModel):
    level: SeverityLevel
    count: int
    weight: int
    points: int


class SecurityScore(BaseModel):
    value: int = Field(ge=0, le=100)
    deductions: List[ScoreDeduction] = []
    total_deduction: int = 0
    source_state_hash: Optional[str] = None


class RiskAssessment(BaseModel):
    """The whole cascade computed from one state."""
    source_state_hash: str
    inventory: List[VulnerabilityRecord]
    classified: List[VulnerabilityRecord]
    matrix: RiskMatrix
    score: SecurityScore


# ─── Run outcome ──────────────────────────────────────────────────────────────


class RunOutcome(BaseModel):
    status: RunStatus
    state_hash: Optional[str] = None
    reason: Optional[str] = None
    tasks_done: int = 0
    tasks_blocked: int = 0
    rejections: int = 0
    appended: int = 0
