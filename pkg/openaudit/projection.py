"""
openaudit/projection.py — Read-model reconstruction from the event log.

AuditState is never stored; it is folded from events.jsonl every time it is
needed. The fold re-enforces the task state machine, so a log that admitted
something the registry cannot interpret fails loudly instead of producing a
plausible-looking state.
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from pydantic import ValidationError

from openaudit import canonical
from openaudit.errors import IntegrityError, LogParseError, ProjectionError
from openaudit.event_store import read_all, verify_chain
from openaudit.logs import get_logger
from openaudit.playbook import Registry
from openaudit.types import (
    ArtifactEntry,
    AuditState,
    ChainReport,
    CheckRecord,
    CheckResult,
    Event,
    EventKind,
    Finding,
    RecordedFinding,
    RunInfo,
    TaskStatus,
    TaskView,
    VerificationResult,
)

log = get_logger(__name__)

ORCHESTRATOR = "orchestrator"


def initial_state(registry: Registry) -> AuditState:
    """All registry tasks in todo, phase 1, nothing recorded."""
    tasks = {
        t.task_id: TaskView(task_id=t.task_id, phase=t.phase, kind=t.kind)
        for t in registry.tasks
    }
    state = AuditState(tasks=tasks)
    state.state_hash = compute_state_hash(state)
    return state


def compute_state_hash(state: AuditState) -> str:
    return canonical.digest(state.model_dump(mode="json", exclude={"state_hash"}))


class _Fold:
    """Mutable working copy used while folding one event list."""

    def __init__(self, registry: Registry):
        self.registry = registry
        self.state = initial_state(registry)
        self.handlers: Dict[EventKind, Callable[[Event], None]] = {
            EventKind.RUN_INITIALIZED: self._run_initialized,
            EventKind.TASK_CLAIMED: self._task_claimed,
            EventKind.TASK_COMPLETED: self._task_completed,
            EventKind.TASK_BLOCKED: self._task_blocked,
            EventKind.TASK_UNBLOCKED: self._task_unblocked,
            EventKind.FINDING_RECORDED: self._finding_recorded,
            EventKind.ARTIFACT_WRITTEN: self._artifact_written,
            EventKind.PHASE_ADVANCED: self._phase_advanced,
        }

    def apply(self, event: Event) -> None:
        if event.kind == EventKind.VERIFICATION_RECORDED:
            # Records a hash of the state; does not change it.
            return
        if event.kind != EventKind.RUN_INITIALIZED and self.state.run is None:
            raise ProjectionError(f"event {event.sequence} precedes run_initialized")
        try:
            self.handlers[event.kind](event)
        except (KeyError, TypeError, ValidationError) as e:
            raise ProjectionError(f"event {event.sequence} ({event.kind.value}) has a malformed payload: {e}") from e
        self.state.last_sequence = event.sequence
        self.state.updated_at = event.timestamp

    def _task(self, event: Event) -> TaskView:
        task_id = event.payload["task_id"]
        task = self.state.tasks.get(task_id)
        if task is None:
            raise ProjectionError(f"event {event.sequence} references unknown task {task_id}")
        return task

    def _replace(self, task: TaskView, **changes) -> None:
        updated = TaskView.model_validate({**task.model_dump(), **changes})
        self.state.tasks[task.task_id] = updated

    def _run_initialized(self, event: Event) -> None:
        if self.state.run is not None or event.sequence != 0:
            raise ProjectionError(f"run_initialized at sequence {event.sequence}")
        payload = event.payload
        if payload["registry_digest"] != self.registry.digest:
            raise ProjectionError(
                "registry digest recorded at init does not match the registry being used"
            )
        config = payload.get("config") or {}
        self.state.run = RunInfo(
            run_id=payload["run_id"],
            registry_digest=payload["registry_digest"],
            config_digest=payload["config_digest"],
            initialized_at=event.timestamp,
            docs_dir_provided=config.get("optional_docs_dir") is not None,
        )

    def _task_claimed(self, event: Event) -> None:
        task = self._task(event)
        if task.status != TaskStatus.TODO:
            raise ProjectionError(f"event {event.sequence}: claim of {task.task_id} while {task.status.value}")
        self._replace(task, status=TaskStatus.IN_PROGRESS, owner=event.actor)

    def _task_completed(self, event: Event) -> None:
        task = self._task(event)
        if task.status != TaskStatus.IN_PROGRESS or task.owner != event.actor:
            raise ProjectionError(
                f"event {event.sequence}: completion of {task.task_id} by {event.actor} "
                f"while {task.status.value} (owner {task.owner})"
            )
        self._replace(task, status=TaskStatus.DONE)
        for raw in event.payload["checks"]:
            result = CheckResult.model_validate(raw)
            self.state.check_results[result.check_id] = CheckRecord(
                check_id=result.check_id,
                status=result.status,
                task_id=task.task_id,
                event_sequence=event.sequence,
            )

    def _task_blocked(self, event: Event) -> None:
        task = self._task(event)
        if task.status == TaskStatus.IN_PROGRESS:
            if event.actor not in (task.owner, ORCHESTRATOR):
                raise ProjectionError(f"event {event.sequence}: {event.actor} blocked a task owned by {task.owner}")
        elif task.status != TaskStatus.TODO or event.actor != ORCHESTRATOR:
            raise ProjectionError(f"event {event.sequence}: block of {task.task_id} while {task.status.value}")
        reason = event.payload["reason"]
        if not isinstance(reason, str) or not reason:
            raise ProjectionError(f"event {event.sequence}: block without a reason")
        self._replace(task, status=TaskStatus.BLOCKED, owner=event.actor, block_reason=reason)

    def _task_unblocked(self, event: Event) -> None:
        task = self._task(event)
        if task.status != TaskStatus.BLOCKED:
            raise ProjectionError(f"event {event.sequence}: unblock of {task.task_id} while {task.status.value}")
        if task.phase != self.state.current_phase:
            raise ProjectionError(
                f"event {event.sequence}: unblock of phase-{task.phase} task in phase {self.state.current_phase}"
            )
        self._replace(task, status=TaskStatus.TODO, owner=None, block_reason=None)

    def _finding_recorded(self, event: Event) -> None:
        task = self._task(event)
        if task.status != TaskStatus.IN_PROGRESS:
            raise ProjectionError(f"event {event.sequence}: finding for {task.task_id} while {task.status.value}")
        finding = Finding.model_validate(event.payload["finding"])
        try:
            domain_id = self.registry.check(finding.check_id).domain_id
        except KeyError:
            raise ProjectionError(
                f"event {event.sequence}: finding for unknown check {finding.check_id}"
            ) from None
        self.state.findings.append(
            RecordedFinding(
                task_id=task.task_id,
                domain_id=domain_id,
                event_sequence=event.sequence,
                finding=finding,
            )
        )

    def _artifact_written(self, event: Event) -> None:
        payload = event.payload
        task_id = payload.get("task_id")
        if task_id is not None:
            self._task(event)
        path = payload["path"]
        self.state.artifacts[path] = ArtifactEntry(
            path=path,
            written_by_task=task_id,
            event_sequence=event.sequence,
            sha256=payload["sha256"],
            size=payload.get("size", 0),
        )

    def _phase_advanced(self, event: Event) -> None:
        current = self.state.current_phase
        target = event.payload["to_phase"]
        if target != current + 1 or target > self.registry.final_phase:
            raise ProjectionError(f"event {event.sequence}: phase {current} cannot advance to {target}")
        open_tasks = [
            t.task_id
            for t in self.state.tasks.values()
            if t.phase == current and t.status not in (TaskStatus.DONE, TaskStatus.BLOCKED)
        ]
        if open_tasks:
            raise ProjectionError(
                f"event {event.sequence}: phase {current} advanced with open tasks {', '.join(open_tasks)}"
            )
        self.state.current_phase = target


def project(events: List[Event], registry: Registry) -> AuditState:
    """
    Fold an event list into the current audit state.

    Args:
        events: Events of a verified log, in order
        registry: The registry the run was initialized with

    Returns:
        AuditState with state_hash filled in

    Raises:
        ProjectionError: The log references unknown tasks or breaks the
            task state machine
    """
    fold = _Fold(registry)
    for event in events:
        fold.apply(event)
    state = fold.state
    state.state_hash = compute_state_hash(state)
    return state


def replay_verify(log_path: Union[str, Path], registry: Registry) -> VerificationResult:
    """
    Verify a log from scratch: chain, projection, and the latest recorded hash.

    Never raises for a damaged log; the damage is reported in the result's
    chain report and projection is skipped.
    """
    try:
        events = read_all(log_path)
    except LogParseError as e:
        return VerificationResult(
            chain=ChainReport(valid=False, first_bad_sequence=e.line_number - 1, detail=str(e))
        )
    except IntegrityError as e:
        return VerificationResult(
            chain=ChainReport(valid=False, first_bad_sequence=e.sequence, detail=str(e))
        )

    chain = verify_chain(events)
    if not chain.valid:
        return VerificationResult(chain=chain)

    fold = _Fold(registry)
    recorded: Optional[str] = None
    at_record: Optional[str] = None
    for event in events:
        if event.kind == EventKind.VERIFICATION_RECORDED:
            recorded = event.payload.get("state_hash")
            at_record = compute_state_hash(fold.state)
        try:
            fold.apply(event)
        except ProjectionError as e:
            log.warning("projection_failed", sequence=event.sequence, detail=str(e))
            return VerificationResult(chain=chain, matches_recorded=False, error=str(e))

    state_hash = compute_state_hash(fold.state)
    matches = None if recorded is None else recorded == at_record
    return VerificationResult(
        chain=chain,
        state_hash=state_hash,
        matches_recorded=matches,
        recorded_hash=recorded,
    )
