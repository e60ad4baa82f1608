"""
openaudit/protocol.py — Task state machine and fail-closed intention validation.

Agents never mutate state. They emit one Intention per dispatch; the
orchestrator parses it strictly and validates it against the projected state.
The result is either the event drafts to append or exactly one Rejection,
and a rejection has no effect on state.
"""

import json
import posixpath
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from openaudit.canonical import sha256_hex
from openaudit.errors import IntentionRejected
from openaudit.types import (
    Action,
    AuditState,
    CheckResult,
    CheckStatus,
    EventDraft,
    EventKind,
    Finding,
    TaskStatus,
)


class RejectionCode(str, Enum):
    SCHEMA_VIOLATION = "schema_violation"
    INVALID_TRANSITION = "invalid_transition"
    STATUS_MISMATCH = "status_mismatch"
    LOCK_VIOLATION = "lock_violation"
    BOUNDARY_VIOLATION = "boundary_violation"
    COMPOUND_ACTION = "compound_action"
    DONE_REOPEN = "done_reopen"
    UNKNOWN_TASK = "unknown_task"


class Rejection(BaseModel):
    code: RejectionCode
    detail: str


class FileUpdate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str = Field(min_length=1)
    content: str


class Intention(BaseModel):
    """
    One structured agent output proposing a single task transition.

    Parsed with strict=True: unknown fields and type coercion are rejected.

    Attributes:
        action: claim, complete or block
        task_id: Task the intention is about
        actor: Agent identity (must own the task for complete/block)
        prior_status: Status the agent believes the task is in
        checks: Check results (complete only, at least one)
        file_updates: Report files to write (complete only)
        findings: Findings for failed checks (complete only)
        reason: Why the task is blocked (block only)
    """
    model_config = ConfigDict(extra="forbid")

    action: Action
    task_id: str = Field(min_length=1)
    actor: str = Field(min_length=1)
    prior_status: TaskStatus
    checks: List[CheckResult] = []
    file_updates: List[FileUpdate] = []
    findings: List[Finding] = []
    reason: Optional[str] = None

    @model_validator(mode="after")
    def _payload_matches_action(self):
        carries_work = bool(self.checks or self.file_updates or self.findings)
        if self.action == Action.COMPLETE:
            if not self.checks:
                raise ValueError("complete must carry at least one check result")
            if self.reason is not None:
                raise ValueError("complete carries no reason")
        elif carries_work:
            raise ValueError(f"{self.action.value} carries no checks, file_updates or findings")
        if self.action == Action.BLOCK:
            if self.reason is None or not self.reason.strip():
                raise ValueError("block requires a non-empty reason")
        elif self.action == Action.CLAIM and self.reason is not None:
            raise ValueError("claim carries no reason")
        return self


class Boundary(BaseModel):
    """Path prefixes (under reports/) a task may write to."""
    allowed_path_prefixes: List[str]

    def admits(self, path: str) -> bool:
        return any(path.startswith(prefix) for prefix in self.allowed_path_prefixes)


class TaskContract(BaseModel):
    """
    What the orchestrator expects from the current dispatch.

    Attributes:
        task_id: The dispatched task
        actor: The agent binding the task was dispatched to
        required_check_ids: Checks a complete must report, each exactly once
        builtin_results: Kernel evaluation of the task's builtin checks
        verification_check_ids: Task-scoped checks that must not fail
        required_outputs: Paths the agent must write on complete
        reserved_paths: Paths the kernel writes; agents may not
    """
    task_id: str
    actor: str
    required_check_ids: List[str] = []
    builtin_results: Dict[str, CheckStatus] = {}
    verification_check_ids: List[str] = []
    required_outputs: List[str] = []
    reserved_paths: List[str] = []


_TRANSITIONS: Dict[Tuple[TaskStatus, Action], TaskStatus] = {
    (TaskStatus.TODO, Action.CLAIM): TaskStatus.IN_PROGRESS,
    (TaskStatus.IN_PROGRESS, Action.COMPLETE): TaskStatus.DONE,
    (TaskStatus.IN_PROGRESS, Action.BLOCK): TaskStatus.BLOCKED,
}

_EVENT_FOR_ACTION = {
    Action.CLAIM: EventKind.TASK_CLAIMED,
    Action.BLOCK: EventKind.TASK_BLOCKED,
}


def transition(status: TaskStatus, action: Action) -> TaskStatus:
    """
    Apply an action to a status.

    Raises:
        IntentionRejected: With code invalid_transition for every pair outside
            (todo, claim), (in_progress, complete), (in_progress, block)
    """
    try:
        return _TRANSITIONS[(TaskStatus(status), Action(action))]
    except KeyError:
        raise IntentionRejected(
            Rejection(
                code=RejectionCode.INVALID_TRANSITION,
                detail=f"{Action(action).value} is not permitted from {TaskStatus(status).value}",
            )
        ) from None


def _reject(code: RejectionCode, detail: str) -> IntentionRejected:
    return IntentionRejected(Rejection(code=code, detail=detail))


def parse_intention(raw: str) -> Intention:
    """
    Strictly parse one JSON object into an Intention.

    Raises:
        IntentionRejected: compound_action for a JSON array or multi-valued
            action, schema_violation for everything else that is not exactly
            one valid intention object
    """
    text = raw.strip()
    if not text:
        raise _reject(RejectionCode.SCHEMA_VIOLATION, "empty output")

    decoder = json.JSONDecoder()
    try:
        value, end = decoder.raw_decode(text)
    except json.JSONDecodeError as e:
        raise _reject(RejectionCode.SCHEMA_VIOLATION, f"not valid JSON: {e.msg}") from None
    if text[end:].strip():
        raise _reject(
            RejectionCode.SCHEMA_VIOLATION,
            "output contains more than one JSON value (one intention per emission)",
        )
    if isinstance(value, list):
        raise _reject(RejectionCode.COMPOUND_ACTION, "a list of intentions was emitted")
    if not isinstance(value, dict):
        raise _reject(RejectionCode.SCHEMA_VIOLATION, "intention must be a JSON object")
    if isinstance(value.get("action"), list):
        raise _reject(RejectionCode.COMPOUND_ACTION, "action must name exactly one action")

    try:
        return Intention.model_validate_json(text[:end], strict=True)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "intention"
        raise _reject(RejectionCode.SCHEMA_VIOLATION, f"{where}: {first['msg']}") from None


def _check_paths(intention: Intention, boundary: Boundary, contract: Optional[TaskContract]):
    reserved = set(contract.reserved_paths) if contract else set()
    for update in intention.file_updates:
        path = update.path
        parts = path.split("/")
        if (
            path.startswith("/")
            or "\\" in path
            or ".." in parts
            or "." in parts
            or "" in parts
            or posixpath.normpath(path) != path
        ):
            return Rejection(
                code=RejectionCode.BOUNDARY_VIOLATION,
                detail=f"{path!r} is not a normalized relative path",
            )
        if not boundary.admits(path):
            return Rejection(
                code=RejectionCode.BOUNDARY_VIOLATION,
                detail=f"{path} is outside {', '.join(boundary.allowed_path_prefixes)}",
            )
        if path in reserved:
            return Rejection(
                code=RejectionCode.BOUNDARY_VIOLATION,
                detail=f"{path} is written by the kernel",
            )
    return None


def _check_contract(intention: Intention, contract: TaskContract) -> Optional[Rejection]:
    def violation(detail: str) -> Rejection:
        return Rejection(code=RejectionCode.SCHEMA_VIOLATION, detail=detail)

    reported: Dict[str, CheckResult] = {}
    for check in intention.checks:
        if check.check_id in reported:
            return violation(f"check {check.check_id} reported more than once")
        reported[check.check_id] = check

    expected = set(contract.required_check_ids) | set(contract.verification_check_ids)
    unknown = sorted(set(reported) - expected)
    if unknown:
        return violation(f"checks not part of {contract.task_id}: {', '.join(unknown)}")
    missing = [c for c in contract.required_check_ids + contract.verification_check_ids if c not in reported]
    if missing:
        return violation(f"missing check results: {', '.join(missing)}")

    for check_id, status in contract.builtin_results.items():
        if reported[check_id].status != status:
            return violation(
                f"{check_id} reported {reported[check_id].status.value}, "
                f"builtin evaluation is {CheckStatus(status).value}"
            )
    for check_id in contract.verification_check_ids:
        if reported[check_id].status == CheckStatus.FAIL:
            return violation(f"task verification {check_id} failed")

    failed = {c for c, r in reported.items() if r.status == CheckStatus.FAIL}
    with_findings = {f.check_id for f in intention.findings}
    stray = sorted(with_findings - failed)
    if stray:
        return violation(f"findings for checks that did not fail: {', '.join(stray)}")
    unsupported = sorted(failed - with_findings)
    if unsupported:
        return violation(f"failed checks without findings: {', '.join(unsupported)}")

    written = {u.path for u in intention.file_updates}
    absent = [p for p in contract.required_outputs if p not in written]
    if absent:
        return violation(f"required outputs not written: {', '.join(absent)}")
    return None


def validate(
    intention: Intention,
    state: AuditState,
    boundary: Boundary,
    contract: Optional[TaskContract] = None,
) -> Union[List[EventDraft], Rejection]:
    """
    Fail-closed validation of an intention against projected state.

    Checks run in a fixed order and the first failure is returned, so every
    rejection carries exactly one code. Neither the state nor the intention
    is modified.

    Args:
        intention: Parsed agent intention
        state: State projected from a verified log
        boundary: Write boundary of the task's kind
        contract: Optional expectations of the current dispatch

    Returns:
        Event drafts to append, or a Rejection
    """
    task = state.tasks.get(intention.task_id)
    if task is None:
        return Rejection(code=RejectionCode.UNKNOWN_TASK, detail=f"no task {intention.task_id}")
    if task.status == TaskStatus.DONE:
        return Rejection(
            code=RejectionCode.DONE_REOPEN,
            detail=f"{task.task_id} is done and cannot be acted on",
        )
    if contract is not None and intention.task_id != contract.task_id:
        return Rejection(
            code=RejectionCode.STATUS_MISMATCH,
            detail=f"dispatched for {contract.task_id}, intention names {intention.task_id}",
        )
    if intention.prior_status != task.status:
        return Rejection(
            code=RejectionCode.STATUS_MISMATCH,
            detail=(
                f"{task.task_id} is {task.status.value}, "
                f"intention assumes {intention.prior_status.value}"
            ),
        )
    try:
        transition(task.status, intention.action)
    except IntentionRejected as e:
        return e.rejection
    if intention.action == Action.CLAIM and task.phase != state.current_phase:
        return Rejection(
            code=RejectionCode.STATUS_MISMATCH,
            detail=f"{task.task_id} belongs to phase {task.phase}, current phase is {state.current_phase}",
        )

    if intention.action == Action.CLAIM:
        if task.owner is not None:
            return Rejection(
                code=RejectionCode.LOCK_VIOLATION,
                detail=f"{task.task_id} is already held by {task.owner}",
            )
    elif task.owner != intention.actor:
        return Rejection(
            code=RejectionCode.LOCK_VIOLATION,
            detail=f"{task.task_id} is owned by {task.owner}, not {intention.actor}",
        )
    if contract is not None and intention.actor != contract.actor:
        return Rejection(
            code=RejectionCode.LOCK_VIOLATION,
            detail=f"{task.task_id} was dispatched to {contract.actor}, not {intention.actor}",
        )

    rejection = _check_paths(intention, boundary, contract)
    if rejection is not None:
        return rejection
    if contract is not None and intention.action == Action.COMPLETE:
        rejection = _check_contract(intention, contract)
        if rejection is not None:
            return rejection

    return _drafts(intention)


def _drafts(intention: Intention) -> List[EventDraft]:
    task_id, actor = intention.task_id, intention.actor
    if intention.action == Action.CLAIM:
        return [EventDraft(kind=EventKind.TASK_CLAIMED, actor=actor, payload={"task_id": task_id})]
    if intention.action == Action.BLOCK:
        return [
            EventDraft(
                kind=EventKind.TASK_BLOCKED,
                actor=actor,
                payload={"task_id": task_id, "reason": intention.reason},
            )
        ]

    drafts: List[EventDraft] = []
    for finding in intention.findings:
        drafts.append(
            EventDraft(
                kind=EventKind.FINDING_RECORDED,
                actor=actor,
                payload={"task_id": task_id, "finding": finding.model_dump(mode="json")},
            )
        )
    for update in intention.file_updates:
        data = update.content.encode("utf-8")
        drafts.append(
            EventDraft(
                kind=EventKind.ARTIFACT_WRITTEN,
                actor=actor,
                payload={
                    "task_id": task_id,
                    "path": update.path,
                    "sha256": sha256_hex(data),
                    "size": len(data),
                },
            )
        )
    drafts.append(
        EventDraft(
            kind=EventKind.TASK_COMPLETED,
            actor=actor,
            payload={
                "task_id": task_id,
                "checks": [c.model_dump(mode="json") for c in intention.checks],
            },
        )
    )
    return drafts
