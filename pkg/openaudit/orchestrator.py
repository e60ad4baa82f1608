"""
openaudit/orchestrator.py — The run loop and operator commands.

Each loop iteration re-reads events.jsonl, verifies the chain, projects the
state, and then takes exactly one step: write missing kernel artifacts,
finish a terminal run, advance the phase, block tasks whose dependencies are
blocked, or dispatch one task through a claim/complete repair cycle. All
authoritative state lives in the log; nothing is carried between iterations
except caches that are pure functions of the repository.

Run directory layout:
    events.jsonl      admitted, hash-chained events
    registry.json     registry copied at init
    agents.json       agent bindings (not part of the hash chain)
    diagnostics/      dispatch and rejection records
    reports/          task artifacts and the final report
"""

import json
import shutil
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel

from openaudit import canonical
from openaudit.agents.base import AgentBinding, BaseAgent, create_agent
from openaudit.clock import Clock
from openaudit.config import (
    RunConfig,
    binding_for,
    config_from_snapshot,
    dump_agents,
    load_agents,
    make_clock,
    recorded_clock,
    snapshot,
)
from openaudit.diagnostics import Diagnostics, DispatchRecord, RejectionRecord
from openaudit.errors import (
    AppendError,
    ContextError,
    DispatchError,
    IntegrityError,
    IntentionRejected,
    LogParseError,
    ProjectionError,
    RegistryError,
    RunAborted,
    RunDirectoryError,
    UnblockError,
    describe,
)
from openaudit.event_store import EventLog, read_all, verify_chain
from openaudit.logs import get_logger
from openaudit.playbook import (
    DEFAULT_REGISTRY_PATH,
    Registry,
    Task,
    TaskOutput,
    build_context,
    eligible_tasks,
    load_registry,
    run_builtin_checks,
    task_boundary,
)
from openaudit.projection import ORCHESTRATOR, project, replay_verify
from openaudit.protocol import Rejection, TaskContract, parse_intention, validate
from openaudit.report import render_kernel_artifact
from openaudit.risk import assess
from openaudit.types import (
    Action,
    AuditState,
    CheckResult,
    Event,
    EventBody,
    EventKind,
    RunOutcome,
    RunStatus,
    TaskStatus,
    VerificationResult,
)

log = get_logger(__name__)

EVENTS_FILE = "events.jsonl"
REGISTRY_FILE = "registry.json"
AGENTS_FILE = "agents.json"
OPERATOR = "operator"

AgentFactory = Callable[[AgentBinding], BaseAgent]


# ─── Run directory ────────────────────────────────────────────────────────────


def _log_path(run_dir: Path) -> Path:
    return run_dir / EVENTS_FILE


def open_registry(run_dir: Union[str, Path]) -> Registry:
    """Load the registry copied into a run directory at init."""
    run_dir = Path(run_dir)
    if not _log_path(run_dir).exists():
        raise RunDirectoryError(f"{run_dir} is not an initialized run directory (no {EVENTS_FILE})")
    try:
        return load_registry(run_dir / REGISTRY_FILE)
    except RegistryError as e:
        raise RunDirectoryError(f"run registry is unusable: {e}") from e


def _recorded_config(events: List[Event]) -> dict:
    if not events or events[0].kind != EventKind.RUN_INITIALIZED:
        raise RunDirectoryError("log does not start with run_initialized")
    return dict(events[0].payload.get("config") or {})


def _read_verified(run_dir: Path, registry: Registry) -> Tuple[List[Event], AuditState]:
    """
    Read, verify and project the log.

    Raises:
        RunAborted: The log cannot be read, its chain is broken, or it
            cannot be projected against the registry
    """
    try:
        events = read_all(_log_path(run_dir))
    except (LogParseError, IntegrityError) as e:
        raise RunAborted(f"event log unreadable: {e}") from e
    chain = verify_chain(events)
    if not chain.valid:
        raise RunAborted(f"chain invalid at sequence {chain.first_bad_sequence}: {chain.detail}")
    try:
        state = project(events, registry)
    except ProjectionError as e:
        raise RunAborted(f"projection failed: {e}") from e
    return events, state


def _terminal(state: AuditState) -> bool:
    return all(t.status in (TaskStatus.DONE, TaskStatus.BLOCKED) for t in state.tasks.values())


def _write_file(run_dir: Path, rel_path: str, content: str) -> bytes:
    data = content.encode("utf-8")
    target = run_dir / rel_path
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(data)
    return data


def _artifact_payload(task_id: Optional[str], path: str, data: bytes, **extra) -> dict:
    return {"task_id": task_id, "path": path, "sha256": canonical.sha256_hex(data), "size": len(data), **extra}


# ─── init ─────────────────────────────────────────────────────────────────────


def cmd_init(config: RunConfig, run_dir: Union[str, Path], clock: Optional[Clock] = None) -> Event:
    """
    Create a run directory and append run_initialized.

    Raises:
        RunDirectoryError: run_dir exists and is not empty
        RegistryError: The configured registry is invalid
    """
    run_dir = Path(run_dir)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise RunDirectoryError(f"run directory {run_dir} is not empty")
    registry_source = config.registry_path or DEFAULT_REGISTRY_PATH
    registry = load_registry(registry_source)

    run_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(registry_source, run_dir / REGISTRY_FILE)
    (run_dir / AGENTS_FILE).write_text(json.dumps(dump_agents(config.agents), indent=2) + "\n", encoding="utf-8")

    clock = clock or make_clock(config, 0)
    timestamp = clock.now()
    recorded = snapshot(config)
    run_id = "run-" + canonical.digest(
        {"config": recorded, "registry_digest": registry.digest, "initialized_at": timestamp}
    )[:12]
    event = EventLog(_log_path(run_dir)).append(
        EventBody(
            timestamp=timestamp,
            kind=EventKind.RUN_INITIALIZED,
            actor=ORCHESTRATOR,
            payload={
                "run_id": run_id,
                "registry_digest": registry.digest,
                "config_digest": canonical.digest(recorded),
                "config": recorded,
            },
        )
    )
    log.info("run_initialized", run_id=run_id, run_dir=str(run_dir))
    return event


# ─── run ──────────────────────────────────────────────────────────────────────


class _RunLoop:
    """One invocation of `run` over a run directory."""

    def __init__(
        self,
        run_dir: Path,
        registry: Registry,
        config: RunConfig,
        agent_factory: AgentFactory,
        clock: Clock,
    ):
        self.run_dir = run_dir
        self.registry = registry
        self.config = config
        self.agent_factory = agent_factory
        self.event_log = EventLog(_log_path(run_dir), clock)
        self.diagnostics = Diagnostics(run_dir)
        self.agents: Dict[str, BaseAgent] = {}
        self.builtin_cache: Dict[str, List[CheckResult]] = {}
        self.appended = 0
        self.rejections = 0
        self.reserved_paths = sorted(
            o.path for t in registry.tasks for o in t.outputs if o.producer == "kernel"
        )

    def _emit(self, kind: EventKind, actor: str, payload: dict) -> Event:
        event = self.event_log.emit(kind, actor, payload)
        self.appended += 1
        return event

    def _outcome(self, status: RunStatus, state: Optional[AuditState], reason: Optional[str] = None) -> RunOutcome:
        return RunOutcome(
            status=status,
            state_hash=state.state_hash if state else None,
            reason=reason,
            tasks_done=len(state.tasks_with(TaskStatus.DONE)) if state else 0,
            tasks_blocked=len(state.tasks_with(TaskStatus.BLOCKED)) if state else 0,
            rejections=self.rejections,
            appended=self.appended,
        )

    def run(self) -> RunOutcome:
        state: Optional[AuditState] = None
        try:
            while True:
                events, state = _read_verified(self.run_dir, self.registry)
                if self._write_missing_outputs(events, state):
                    continue
                if _terminal(state):
                    return self._finish(events, state)
                if self._advance_phase(state):
                    continue
                if self._block_dependents(state):
                    continue
                task_id = self._next_task(state)
                if task_id is None:
                    raise RunAborted(f"no eligible task in phase {state.current_phase}")
                self._step(self.registry.task(task_id), state)
        except (RunAborted, AppendError, ContextError) as e:
            log.error("run_aborted", reason=describe(e))
            return self._outcome(RunStatus.ABORTED, state, reason=describe(e))

    # Kernel outputs

    def _kernel_outputs(self, task: Task, when: str) -> List[TaskOutput]:
        return [o for o in task.outputs if o.producer == "kernel" and o.when == when]

    def _write_missing_outputs(self, events: List[Event], state: AuditState) -> bool:
        """
        Write kernel completion outputs of done tasks that are not yet recorded.

        Content is rendered from the log prefix ending at the task's
        task_completed event, so an interrupted run writes the same bytes.
        """
        for task in self.registry.tasks:
            if state.tasks[task.task_id].status != TaskStatus.DONE:
                continue
            missing = [o for o in self._kernel_outputs(task, "completion") if o.path not in state.artifacts]
            if not missing:
                continue
            completed_at = max(
                e.sequence
                for e in events
                if e.kind == EventKind.TASK_COMPLETED and e.payload.get("task_id") == task.task_id
            )
            prefix = project(events[: completed_at + 1], self.registry)
            assessment = assess(prefix, self.registry, self.config.quick_fix_threshold)
            for output in missing:
                content = render_kernel_artifact(output.artifact, task, prefix, self.registry, assessment)
                data = _write_file(self.run_dir, output.path, content)
                self._emit(EventKind.ARTIFACT_WRITTEN, ORCHESTRATOR, _artifact_payload(task.task_id, output.path, data))
            return True
        return False

    # Phase handling

    def _advance_phase(self, state: AuditState) -> bool:
        current = state.current_phase
        if current >= self.registry.final_phase:
            return False
        if any(
            t.status not in (TaskStatus.DONE, TaskStatus.BLOCKED)
            for t in state.tasks.values()
            if t.phase == current
        ):
            return False
        self._emit(EventKind.PHASE_ADVANCED, ORCHESTRATOR, {"from_phase": current, "to_phase": current + 1})
        log.info("phase_advanced", from_phase=current, to_phase=current + 1)
        return True

    def _block(self, task_id: str, reason: str) -> None:
        self._emit(EventKind.TASK_BLOCKED, ORCHESTRATOR, {"task_id": task_id, "reason": reason})
        log.warning("task_blocked", task_id=task_id, reason=reason)

    def _block_dependents(self, state: AuditState) -> bool:
        blocked_any = False
        for task in self.registry.tasks_in_phase(state.current_phase):
            if state.tasks[task.task_id].status != TaskStatus.TODO:
                continue
            blocked_deps = [d for d in task.depends_on if state.tasks[d].status == TaskStatus.BLOCKED]
            if blocked_deps:
                self._block(task.task_id, f"dependency_blocked: {blocked_deps[0]}")
                blocked_any = True
        return blocked_any

    def _next_task(self, state: AuditState) -> Optional[str]:
        for task in self.registry.tasks_in_phase(state.current_phase):
            if state.tasks[task.task_id].status == TaskStatus.IN_PROGRESS:
                return task.task_id
        eligible = eligible_tasks(state, self.registry)
        return eligible[0] if eligible else None

    # Dispatch

    def _agent(self, binding: AgentBinding) -> BaseAgent:
        # Scripted agents keep queue state, so one instance per binding per run.
        if binding.name not in self.agents:
            self.agents[binding.name] = self.agent_factory(binding)
        return self.agents[binding.name]

    def _builtin_results(self, task: Task) -> List[CheckResult]:
        if task.task_id not in self.builtin_cache:
            checks = [c for c in self.registry.checks_for(task) if c.mode == "builtin"]
            self.builtin_cache[task.task_id] = run_builtin_checks(
                checks, self.config.repo_root, workers=self.config.builtin_workers
            )
        return self.builtin_cache[task.task_id]

    def _contract(self, task: Task, actor: str, builtin: List[CheckResult]) -> TaskContract:
        return TaskContract(
            task_id=task.task_id,
            actor=actor,
            required_check_ids=[c.check_id for c in self.registry.checks_for(task)],
            builtin_results={r.check_id: r.status for r in builtin},
            verification_check_ids=[v.check_id for v in task.verification_checks],
            required_outputs=[o.path for o in task.outputs if o.producer == "agent" and o.when == "completion"],
            reserved_paths=self.reserved_paths,
        )

    def _step(self, task: Task, state: AuditState) -> None:
        """Dispatch one action for a task, repairing rejected intentions."""
        view = state.tasks[task.task_id]
        binding = binding_for(self.config.agents, task.kind)
        agent = self._agent(binding)
        builtin = self._builtin_results(task) if task.domain_id else []
        contract = self._contract(task, binding.name, builtin)
        expected = Action.CLAIM if view.status == TaskStatus.TODO else Action.COMPLETE
        feedback: List[str] = []

        for attempt in range(1, self.config.max_repair_attempts + 2):
            pack = build_context(
                task.task_id,
                state,
                self.config.repo_root,
                self.registry,
                run_dir=self.run_dir,
                docs_dir=self.config.optional_docs_dir,
                byte_budget=self.config.context_byte_budget,
                builtin_results=builtin,
                feedback=feedback,
            )
            try:
                output = agent.dispatch(pack)
            except DispatchError as e:
                self.diagnostics.record_dispatch(
                    DispatchRecord(
                        task_id=task.task_id,
                        actor=binding.name,
                        expected_action=expected,
                        attempt=attempt,
                        outcome="dispatch_failed",
                        error=describe(e),
                    )
                )
                log.warning("dispatch_failed", task_id=task.task_id, agent=binding.name, error=describe(e))
                self._block(task.task_id, f"dispatch_failed: {describe(e, limit=200)}")
                return

            try:
                intention = parse_intention(output.raw_text)
                result = validate(intention, state, task_boundary(task), contract)
            except IntentionRejected as e:
                result = e.rejection

            self.diagnostics.record_dispatch(
                DispatchRecord(
                    task_id=task.task_id,
                    actor=binding.name,
                    expected_action=expected,
                    attempt=attempt,
                    raw_text=output.raw_text,
                    latency_ms=output.latency_ms,
                    outcome="rejected" if isinstance(result, Rejection) else "admitted",
                )
            )
            if isinstance(result, Rejection):
                self.rejections += 1
                self.diagnostics.record_rejection(
                    RejectionRecord(
                        task_id=task.task_id,
                        actor=binding.name,
                        code=result.code.value,
                        detail=result.detail,
                        attempt=attempt,
                        raw_text=output.raw_text,
                    )
                )
                log.info("intention_rejected", task_id=task.task_id, code=result.code.value, detail=result.detail)
                feedback.append(f"{result.code.value}: {result.detail}")
                continue

            for update in intention.file_updates:
                _write_file(self.run_dir, update.path, update.content)
            for draft in result:
                self._emit(draft.kind, draft.actor, draft.payload)
            return

        self._block(task.task_id, "protocol_violations_exhausted")

    # Finish

    def _terminal_outputs(self) -> List[Tuple[Task, TaskOutput]]:
        return [(t, o) for t in self.registry.tasks for o in self._kernel_outputs(t, "terminal")]

    def _finish(self, events: List[Event], state: AuditState) -> RunOutcome:
        outputs = self._terminal_outputs()
        source = report_source_sequence(events, {o.path for _, o in outputs})
        recorded = _recorded_report_sources(events, {o.path for _, o in outputs})
        current = all(
            recorded.get(o.path) == source and _on_disk_matches(self.run_dir, state, o.path)
            for _, o in outputs
        )
        if not current:
            prefix = project(events[: source + 1], self.registry)
            assessment = assess(prefix, self.registry, self.config.quick_fix_threshold)
            for task, output in outputs:
                content = render_kernel_artifact(output.artifact, task, prefix, self.registry, assessment)
                data = _write_file(self.run_dir, output.path, content)
                owner = task.task_id if state.tasks[task.task_id].status == TaskStatus.DONE else None
                self._emit(
                    EventKind.ARTIFACT_WRITTEN,
                    ORCHESTRATOR,
                    _artifact_payload(owner, output.path, data, source_sequence=source),
                )
            events, state = _read_verified(self.run_dir, self.registry)

        problems = artifact_chain_problems(self.run_dir, state, self.registry)
        if problems:
            raise RunAborted("artifact chain incomplete: " + "; ".join(problems[:5]))

        if events[-1].kind != EventKind.VERIFICATION_RECORDED:
            self._emit(
                EventKind.VERIFICATION_RECORDED,
                ORCHESTRATOR,
                {"state_hash": state.state_hash, "last_sequence": state.last_sequence, "chain_valid": True},
            )
        status = RunStatus.COMPLETE_WITH_BLOCKED if state.tasks_with(TaskStatus.BLOCKED) else RunStatus.VERIFIED_COMPLETE
        log.info("run_finished", status=status.value, state_hash=state.state_hash, appended=self.appended)
        return self._outcome(status, state)


def report_source_sequence(events: List[Event], report_paths: set) -> int:
    """Sequence of the last event the final report is rendered from."""
    for event in reversed(events):
        if event.kind == EventKind.VERIFICATION_RECORDED:
            continue
        if event.kind == EventKind.ARTIFACT_WRITTEN and event.payload.get("path") in report_paths:
            continue
        return event.sequence
    return 0


def _recorded_report_sources(events: List[Event], report_paths: set) -> Dict[str, int]:
    recorded: Dict[str, int] = {}
    for event in events:
        if event.kind == EventKind.ARTIFACT_WRITTEN and event.payload.get("path") in report_paths:
            recorded[event.payload["path"]] = event.payload.get("source_sequence")
    return recorded


def _on_disk_matches(run_dir: Path, state: AuditState, rel_path: str) -> bool:
    entry = state.artifacts.get(rel_path)
    target = run_dir / rel_path
    if entry is None or not target.is_file():
        return False
    return canonical.sha256_hex(target.read_bytes()) == entry.sha256


def artifact_chain_problems(run_dir: Union[str, Path], state: AuditState, registry: Registry) -> List[str]:
    """
    Every recorded artifact is on disk with its recorded digest, and every
    done task has its completion outputs recorded.
    """
    run_dir = Path(run_dir)
    problems = []
    for path in sorted(state.artifacts):
        if not _on_disk_matches(run_dir, state, path):
            problems.append(f"{path} missing or modified")
    for task in registry.tasks:
        if state.tasks[task.task_id].status != TaskStatus.DONE:
            continue
        for output in task.outputs:
            if output.when == "completion" and output.path not in state.artifacts:
                problems.append(f"{task.task_id} output {output.path} not recorded")
    return problems


def cmd_run(
    run_dir: Union[str, Path],
    agent_factory: Optional[AgentFactory] = None,
    clock: Optional[Clock] = None,
) -> RunOutcome:
    """
    Drive a run until every task is done or blocked, then verify it.

    Args:
        run_dir: Initialized run directory
        agent_factory: Builds agents from bindings (create_agent by default)
        clock: Event clock; derived from the recorded config when absent

    Returns:
        RunOutcome; aborted runs return status aborted with a reason
    """
    run_dir = Path(run_dir)
    registry = open_registry(run_dir)
    try:
        events = read_all(_log_path(run_dir))
    except (LogParseError, IntegrityError) as e:
        log.error("run_aborted", reason=describe(e))
        return RunOutcome(status=RunStatus.ABORTED, reason=f"event log unreadable: {describe(e)}")
    config = config_from_snapshot(_recorded_config(events), load_agents(run_dir / AGENTS_FILE))
    clock = clock or make_clock(config, len(events))
    return _RunLoop(run_dir, registry, config, agent_factory or create_agent, clock).run()


# ─── verify / status / report ─────────────────────────────────────────────────


def cmd_verify(run_dir: Union[str, Path]) -> VerificationResult:
    """Replay-verify a run directory's log against its registry."""
    run_dir = Path(run_dir)
    result = replay_verify(_log_path(run_dir), open_registry(run_dir))
    log.info("run_verified", ok=result.ok, state_hash=result.state_hash)
    return result


class TaskStatusLine(BaseModel):
    task_id: str
    phase: int
    kind: str
    status: TaskStatus
    owner: Optional[str] = None
    block_reason: Optional[str] = None


class RunStatusReport(BaseModel):
    run_id: Optional[str] = None
    chain_valid: bool
    error: Optional[str] = None
    current_phase: Optional[int] = None
    last_sequence: Optional[int] = None
    state_hash: Optional[str] = None
    terminal: bool = False
    verified: bool = False
    counts: Dict[str, int] = {}
    tasks: List[TaskStatusLine] = []
    rejections: Dict[str, int] = {}
    checks_evaluated: int = 0
    checks_total: int = 0
    findings: int = 0
    artifacts: int = 0


def cmd_status(run_dir: Union[str, Path]) -> RunStatusReport:
    """Projected state and run metrics; never modifies the run."""
    run_dir = Path(run_dir)
    registry = open_registry(run_dir)
    rejections = Diagnostics(run_dir).rejection_counts()
    try:
        events, state = _read_verified(run_dir, registry)
    except RunAborted as e:
        return RunStatusReport(chain_valid=False, error=str(e), rejections=rejections)
    counts = {s.value: len(state.tasks_with(s)) for s in TaskStatus}
    return RunStatusReport(
        run_id=state.run.run_id if state.run else None,
        chain_valid=True,
        current_phase=state.current_phase,
        last_sequence=state.last_sequence,
        state_hash=state.state_hash,
        terminal=_terminal(state),
        verified=bool(events) and events[-1].kind == EventKind.VERIFICATION_RECORDED,
        counts=counts,
        tasks=[
            TaskStatusLine(
                task_id=t.task_id,
                phase=t.phase,
                kind=t.kind,
                status=t.status,
                owner=t.owner,
                block_reason=t.block_reason,
            )
            for t in state.tasks.values()
        ],
        rejections=rejections,
        checks_evaluated=sum(1 for c in registry.checks if c.check_id in state.check_results),
        checks_total=len(registry.checks),
        findings=len(state.findings),
        artifacts=len(state.artifacts),
    )


class RenderedFile(BaseModel):
    path: str
    recorded_sha256: Optional[str] = None
    rendered_sha256: str
    matches: Optional[bool] = None


class ReportCheck(BaseModel):
    """Outcome of re-rendering the final report from the log."""
    source_sequence: int
    partial: bool
    files: List[RenderedFile]

    @property
    def matches(self) -> bool:
        return all(f.matches is not False for f in self.files)


def cmd_report(run_dir: Union[str, Path], output_dir: Union[str, Path, None] = None) -> ReportCheck:
    """
    Re-render the final report from the log prefix it was rendered from.

    When the log records a final report, the re-rendered bytes are compared
    with the recorded digests. Otherwise a partial report is rendered from
    the current state. Files are written under output_dir when given.

    Raises:
        RunAborted: The log fails verification
    """
    run_dir = Path(run_dir)
    registry = open_registry(run_dir)
    events, state = _read_verified(run_dir, registry)
    threshold = _recorded_config(events).get("quick_fix_threshold", 3)

    outputs = [(t, o) for t in registry.tasks for o in t.outputs if o.producer == "kernel" and o.when == "terminal"]
    paths = {o.path for _, o in outputs}
    recorded_sources = _recorded_report_sources(events, paths)
    sources = set(recorded_sources.values())
    if recorded_sources and len(sources) == 1 and None not in sources:
        source = sources.pop()
    else:
        source = report_source_sequence(events, paths)
    prefix = project(events[: source + 1], registry)
    assessment = assess(prefix, registry, threshold)

    files = []
    for task, output in outputs:
        content = render_kernel_artifact(output.artifact, task, prefix, registry, assessment)
        rendered = canonical.sha256_hex(content.encode("utf-8"))
        entry = state.artifacts.get(output.path)
        recorded = entry.sha256 if entry is not None and output.path in recorded_sources else None
        files.append(
            RenderedFile(
                path=output.path,
                recorded_sha256=recorded,
                rendered_sha256=rendered,
                matches=None if recorded is None else recorded == rendered,
            )
        )
        if output_dir is not None:
            _write_file(Path(output_dir), Path(output.path).name, content)
    return ReportCheck(source_sequence=source, partial=not _terminal(prefix), files=files)


# ─── operator commands ────────────────────────────────────────────────────────


def cmd_unblock(run_dir: Union[str, Path], task_id: str, reason: str, clock: Optional[Clock] = None) -> Event:
    """
    Return a blocked task of the current phase to todo.

    Raises:
        UnblockError: Unknown task, task not blocked, wrong phase, or no reason
        RunAborted: The log fails verification
    """
    run_dir = Path(run_dir)
    registry = open_registry(run_dir)
    events, state = _read_verified(run_dir, registry)
    if not reason.strip():
        raise UnblockError("an unblock needs a reason")
    view = state.tasks.get(task_id)
    if view is None:
        raise UnblockError(f"no task {task_id}")
    if view.status != TaskStatus.BLOCKED:
        raise UnblockError(f"{task_id} is {view.status.value}, not blocked")
    if view.phase != state.current_phase:
        raise UnblockError(
            f"{task_id} belongs to phase {view.phase}; only blocked tasks of the current phase "
            f"({state.current_phase}) can be unblocked"
        )
    clock = clock or recorded_clock(_recorded_config(events), len(events))
    event = EventLog(_log_path(run_dir), clock).emit(
        EventKind.TASK_UNBLOCKED, OPERATOR, {"task_id": task_id, "reason": reason}
    )
    log.info("task_unblocked", task_id=task_id, sequence=event.sequence)
    return event


def cmd_export_script(run_dir: Union[str, Path], output: Union[str, Path], actor: Optional[str] = None) -> int:
    """Convert recorded dispatches into a scripted-agent script."""
    run_dir = Path(run_dir)
    if not _log_path(run_dir).exists():
        raise RunDirectoryError(f"{run_dir} is not an initialized run directory (no {EVENTS_FILE})")
    return Diagnostics(run_dir).export_script(output, actor=actor)
