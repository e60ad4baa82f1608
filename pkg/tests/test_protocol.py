"""
test_protocol.py — Tests for intention parsing and fail-closed validation.

Every agent output is untrusted. Parsing is strict, validation returns
exactly one rejection code for anything outside the task state machine, and
a rejection never changes state.
"""

import itertools
import json

import pytest

from openaudit.errors import IntentionRejected
from openaudit.projection import compute_state_hash, initial_state
from openaudit.protocol import (
    Boundary,
    Intention,
    Rejection,
    RejectionCode,
    TaskContract,
    parse_intention,
    transition,
    validate,
)
from openaudit.types import Action, AuditState, CheckStatus, EventKind, TaskStatus, TaskView

ME = "auditor"
BOUNDARY = Boundary(allowed_path_prefixes=["reports/phase1/"])
PASS_CHECK = {"check_id": "T01.V1", "status": "pass"}


def _raw(**fields) -> str:
    body = {"action": "claim", "task_id": "T01", "actor": ME, "prior_status": "todo"}
    body.update(fields)
    return json.dumps(body)


def _intention(action, prior_status, actor=ME, task_id="T01", **fields) -> Intention:
    if action == Action.COMPLETE:
        fields.setdefault("checks", [PASS_CHECK])
        fields.setdefault("file_updates", [{"path": "reports/phase1/stack.md", "content": "# Stack\n"}])
    if action == Action.BLOCK:
        fields.setdefault("reason", "repository is empty")
    return Intention.model_validate(
        {"action": action, "task_id": task_id, "actor": actor, "prior_status": prior_status, **fields}
    )


def _state(status, owner, phase=1, current_phase=1) -> AuditState:
    """A one-task state built unvalidated so the grid can hold owner/status pairs the fold never produces."""
    view = TaskView.model_construct(
        task_id="T01",
        status=status,
        owner=owner,
        phase=phase,
        kind="recon",
        block_reason="stuck" if status == TaskStatus.BLOCKED else None,
    )
    return AuditState.model_construct(tasks={"T01": view}, current_phase=current_phase)


def _code(result):
    return result.code if isinstance(result, Rejection) else None


class TestParseIntention:
    """Strict parsing of raw agent text."""

    def test_well_formed_claim(self):
        """A minimal claim parses into typed fields."""
        intention = parse_intention(_raw())
        assert intention.action == Action.CLAIM
        assert intention.task_id == "T01"
        assert intention.actor == ME
        assert intention.prior_status == TaskStatus.TODO

    def test_surrounding_whitespace_is_tolerated(self):
        """Leading and trailing whitespace is ignored."""
        assert parse_intention("\n  " + _raw() + "  \n").task_id == "T01"

    @pytest.mark.parametrize(
        "raw, fragment",
        [
            ("", "empty output"),
            ("not json", "not valid JSON"),
            ('"claim"', "JSON object"),
            (_raw() + _raw(), "more than one JSON value"),
            (_raw(extra="field"), "extra"),
            (_raw(prior_status="pending"), "prior_status"),
            (_raw(task_id=1), "task_id"),
            (_raw(file_updates=[{"path": "reports/phase1/a.md", "content": "x"}]), "carries no"),
            (_raw(action="complete", prior_status="in_progress"), "at least one check"),
            (_raw(action="block", prior_status="in_progress"), "non-empty reason"),
        ],
    )
    def test_schema_violations(self, raw, fragment):
        """Malformed output is a schema_violation with a precise detail."""
        with pytest.raises(IntentionRejected) as excinfo:
            parse_intention(raw)
        assert excinfo.value.rejection.code == RejectionCode.SCHEMA_VIOLATION
        assert fragment in excinfo.value.rejection.detail

    def test_no_type_coercion(self):
        """A string line number is not coerced to int."""
        raw = _raw(action="complete", prior_status="in_progress", checks=[{"check_id": "T01.V1", "status": "pass", "evidence": [{"path": "a", "line": "3"}]}])
        with pytest.raises(IntentionRejected) as excinfo:
            parse_intention(raw)
        assert excinfo.value.rejection.code == RejectionCode.SCHEMA_VIOLATION

    def test_list_of_intentions_is_compound(self):
        """A JSON list of intentions is compound_action."""
        with pytest.raises(IntentionRejected) as excinfo:
            parse_intention("[" + _raw() + "," + _raw(action="complete") + "]")
        assert excinfo.value.rejection.code == RejectionCode.COMPOUND_ACTION

    def test_multi_valued_action_is_compound(self):
        """An action list is compound_action."""
        with pytest.raises(IntentionRejected) as excinfo:
            parse_intention(_raw(action=["claim", "complete"]))
        assert excinfo.value.rejection.code == RejectionCode.COMPOUND_ACTION

    def test_failed_check_needs_substantiation(self):
        """A failed check without severity is rejected."""
        raw = _raw(action="complete", prior_status="in_progress", checks=[{"check_id": "SEC-01", "status": "fail"}])
        with pytest.raises(IntentionRejected, match="severity"):
            parse_intention(raw)


class TestTransition:
    """The task state machine."""

    @pytest.mark.parametrize(
        "status, action, result",
        [
            (TaskStatus.TODO, Action.CLAIM, TaskStatus.IN_PROGRESS),
            (TaskStatus.IN_PROGRESS, Action.COMPLETE, TaskStatus.DONE),
            (TaskStatus.IN_PROGRESS, Action.BLOCK, TaskStatus.BLOCKED),
        ],
    )
    def test_permitted(self, status, action, result):
        """The three permitted transitions."""
        assert transition(status, action) == result

    def test_every_other_pair_is_invalid(self):
        """Every other status/action pair is invalid_transition."""
        permitted = {
            (TaskStatus.TODO, Action.CLAIM),
            (TaskStatus.IN_PROGRESS, Action.COMPLETE),
            (TaskStatus.IN_PROGRESS, Action.BLOCK),
        }
        for status, action in itertools.product(TaskStatus, Action):
            if (status, action) in permitted:
                continue
            with pytest.raises(IntentionRejected) as excinfo:
                transition(status, action)
            assert excinfo.value.rejection.code == RejectionCode.INVALID_TRANSITION

    def test_todo_complete_and_blocked_claim(self):
        """Skipping claim or reclaiming a blocked task is refused."""
        for status, action in [(TaskStatus.TODO, Action.COMPLETE), (TaskStatus.BLOCKED, Action.CLAIM)]:
            with pytest.raises(IntentionRejected, match="not permitted"):
                transition(status, action)


class TestValidate:
    """Validation against projected state."""

    def test_claim_on_todo_is_admitted(self):
        """A claim on a todo task drafts task_claimed."""
        drafts = validate(_intention(Action.CLAIM, TaskStatus.TODO), _state(TaskStatus.TODO, None), BOUNDARY)
        assert [d.kind for d in drafts] == [EventKind.TASK_CLAIMED]
        assert drafts[0].actor == ME
        assert drafts[0].payload == {"task_id": "T01"}

    def test_complete_by_other_actor_is_lock_violation(self):
        """Only the owner may complete."""
        result = validate(_intention(Action.COMPLETE, TaskStatus.IN_PROGRESS), _state(TaskStatus.IN_PROGRESS, "other"), BOUNDARY)
        assert _code(result) == RejectionCode.LOCK_VIOLATION

    def test_stale_prior_status_is_status_mismatch(self):
        """A stale prior_status is status_mismatch."""
        result = validate(_intention(Action.COMPLETE, TaskStatus.TODO), _state(TaskStatus.IN_PROGRESS, ME), BOUNDARY)
        assert _code(result) == RejectionCode.STATUS_MISMATCH

    @pytest.mark.parametrize("action", list(Action))
    def test_any_action_on_done_is_done_reopen(self, action):
        """Done is terminal for every action."""
        result = validate(_intention(action, TaskStatus.DONE), _state(TaskStatus.DONE, ME), BOUNDARY)
        assert _code(result) == RejectionCode.DONE_REOPEN

    @pytest.mark.parametrize(
        "path",
        ["reports/phase2/secrets/x.md", "../escape.md", "/etc/passwd", "reports/phase1/../phase2/x.md", "reports\\phase1\\x.md", "reports/phase1//x.md"],
    )
    def test_paths_outside_boundary(self, path):
        """Writes outside the task prefix are boundary_violation."""
        intention = _intention(Action.COMPLETE, TaskStatus.IN_PROGRESS, file_updates=[{"path": path, "content": "x"}])
        result = validate(intention, _state(TaskStatus.IN_PROGRESS, ME), BOUNDARY)
        assert _code(result) == RejectionCode.BOUNDARY_VIOLATION

    def test_unknown_task(self):
        """Task ids absent from state are unknown_task."""
        result = validate(_intention(Action.CLAIM, TaskStatus.TODO, task_id="T99"), _state(TaskStatus.TODO, None), BOUNDARY)
        assert _code(result) == RejectionCode.UNKNOWN_TASK

    def test_claim_outside_current_phase(self):
        """Tasks from a later phase cannot be claimed."""
        result = validate(_intention(Action.CLAIM, TaskStatus.TODO), _state(TaskStatus.TODO, None, phase=2), BOUNDARY)
        assert _code(result) == RejectionCode.STATUS_MISMATCH

    def test_complete_drafts_findings_artifacts_then_completion(self):
        """Complete drafts findings, then artifacts, then completion."""
        finding = {
            "check_id": "T01.V1",
            "severity": {"level": "LOW", "cia_impact": {"integrity": "partial"}},
            "evidence": [{"path": "README.md", "line": 1}],
            "explanation": "Stack profile is incomplete.",
            "remediation": "List every runtime.",
        }
        failed = dict(finding, status="fail")
        intention = _intention(Action.COMPLETE, TaskStatus.IN_PROGRESS, checks=[failed], findings=[finding])
        drafts = validate(intention, _state(TaskStatus.IN_PROGRESS, ME), BOUNDARY)
        assert [d.kind for d in drafts] == [
            EventKind.FINDING_RECORDED,
            EventKind.ARTIFACT_WRITTEN,
            EventKind.TASK_COMPLETED,
        ]
        artifact = drafts[1].payload
        assert artifact["path"] == "reports/phase1/stack.md"
        assert artifact["size"] == len("# Stack\n")
        assert drafts[2].payload["checks"][0]["status"] == "fail"

    def test_block_by_owner_is_admitted(self):
        """The owner may block with a reason."""
        drafts = validate(_intention(Action.BLOCK, TaskStatus.IN_PROGRESS), _state(TaskStatus.IN_PROGRESS, ME), BOUNDARY)
        assert drafts[0].kind == EventKind.TASK_BLOCKED
        assert drafts[0].payload["reason"] == "repository is empty"

    def test_rejection_has_no_effect(self):
        """A rejection mutates neither state nor intention."""
        state = _state(TaskStatus.IN_PROGRESS, "other")
        before = compute_state_hash(state)
        intention = _intention(Action.COMPLETE, TaskStatus.IN_PROGRESS)
        snapshot = intention.model_dump()
        assert isinstance(validate(intention, state, BOUNDARY), Rejection)
        assert compute_state_hash(state) == before
        assert intention.model_dump() == snapshot


class TestFailClosedGrid:
    """Every cell of status x action x owner x prior_status outside the rules is rejected."""

    OWNERS = {"self": ME, "other": "other", "none": None}

    @staticmethod
    def admissible(status, action, owner, prior):
        if status == TaskStatus.DONE or prior != status:
            return False
        if (status, action) == (TaskStatus.TODO, Action.CLAIM):
            return owner == "none"
        if status == TaskStatus.IN_PROGRESS and action in (Action.COMPLETE, Action.BLOCK):
            return owner == "self"
        return False

    def test_grid(self):
        """Exactly three of 144 cells are admitted and none change state."""
        cells = list(itertools.product(TaskStatus, Action, self.OWNERS, TaskStatus))
        assert len(cells) == 144
        admitted = 0
        for status, action, owner, prior in cells:
            state = _state(status, self.OWNERS[owner])
            before = compute_state_hash(state)
            result = validate(_intention(action, prior), state, BOUNDARY)
            expected = self.admissible(status, action, owner, prior)
            assert isinstance(result, list) == expected, (status, action, owner, prior, result)
            assert compute_state_hash(state) == before
            admitted += expected
        assert admitted == 3

    def test_states_the_fold_never_produces_are_rejected(self):
        """An in-progress task with no owner, or a todo task with one, admits nothing."""
        unowned = _state(TaskStatus.IN_PROGRESS, None)
        assert unowned.tasks["T01"].owner is None
        for action in (Action.COMPLETE, Action.BLOCK):
            result = validate(_intention(action, TaskStatus.IN_PROGRESS), unowned, BOUNDARY)
            assert _code(result) == RejectionCode.LOCK_VIOLATION
        owned_todo = _state(TaskStatus.TODO, "other")
        result = validate(_intention(Action.CLAIM, TaskStatus.TODO), owned_todo, BOUNDARY)
        assert _code(result) == RejectionCode.LOCK_VIOLATION

    def test_rejection_codes_follow_the_check_order(self):
        """Each rejected cell gets the code of the first failing check."""
        for status, action, owner, prior in itertools.product(TaskStatus, Action, self.OWNERS, TaskStatus):
            result = validate(_intention(action, prior), _state(status, self.OWNERS[owner]), BOUNDARY)
            if status == TaskStatus.DONE:
                assert _code(result) == RejectionCode.DONE_REOPEN
            elif prior != status:
                assert _code(result) == RejectionCode.STATUS_MISMATCH
            elif (status, action) not in {
                (TaskStatus.TODO, Action.CLAIM),
                (TaskStatus.IN_PROGRESS, Action.COMPLETE),
                (TaskStatus.IN_PROGRESS, Action.BLOCK),
            }:
                assert _code(result) == RejectionCode.INVALID_TRANSITION
            elif not self.admissible(status, action, owner, prior):
                assert _code(result) == RejectionCode.LOCK_VIOLATION


class TestTaskContract:
    """Dispatch expectations checked on top of the state machine."""

    @pytest.fixture
    def contract(self):
        return TaskContract(
            task_id="T04",
            actor=ME,
            required_check_ids=["SEC-01", "SEC-05"],
            builtin_results={"SEC-01": CheckStatus.PASS},
            required_outputs=["reports/phase2/secrets/narrative.md"],
            reserved_paths=["reports/phase2/secrets/results.json"],
        )

    @pytest.fixture
    def state(self, registry):
        state = initial_state(registry)
        state.current_phase = 2
        state.tasks["T04"] = TaskView(task_id="T04", status=TaskStatus.IN_PROGRESS, owner=ME, phase=2, kind="domain_audit")
        return state

    BOUNDARY2 = Boundary(allowed_path_prefixes=["reports/phase2/secrets/"])
    NARRATIVE = {"path": "reports/phase2/secrets/narrative.md", "content": "# Secrets\n"}

    def _complete(self, checks, findings=(), file_updates=None, task_id="T04", actor=ME):
        return Intention.model_validate(
            {
                "action": "complete",
                "task_id": task_id,
                "actor": actor,
                "prior_status": "in_progress",
                "checks": checks,
                "findings": list(findings),
                "file_updates": [self.NARRATIVE] if file_updates is None else file_updates,
            }
        )

    def test_valid_complete_is_admitted(self, contract, state):
        """A complete that matches the contract is admitted."""
        intention = self._complete([{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}])
        assert isinstance(validate(intention, state, self.BOUNDARY2, contract), list)

    @pytest.mark.parametrize(
        "checks, fragment",
        [
            ([{"check_id": "SEC-01", "status": "pass"}], "missing check results: SEC-05"),
            (
                [{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}],
                "more than once",
            ),
            (
                [{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}, {"check_id": "AUN-01", "status": "pass"}],
                "not part of T04",
            ),
            ([{"check_id": "SEC-01", "status": "not_applicable"}, {"check_id": "SEC-05", "status": "pass"}], "builtin evaluation is pass"),
        ],
    )
    def test_check_set_violations(self, contract, state, checks, fragment):
        """The reported checks must match the contract exactly."""
        result = validate(self._complete(checks), state, self.BOUNDARY2, contract)
        assert _code(result) == RejectionCode.SCHEMA_VIOLATION
        assert fragment in result.detail

    def test_failed_check_without_finding(self, contract, state):
        """Every failed check needs a finding."""
        failed = {
            "check_id": "SEC-05",
            "status": "fail",
            "severity": {"level": "MEDIUM", "cia_impact": {"confidentiality": "partial"}},
            "evidence": [{"path": "app.py", "line": 3}],
            "explanation": "Secret in history.",
            "remediation": "Rotate and purge.",
        }
        result = validate(self._complete([{"check_id": "SEC-01", "status": "pass"}, failed]), state, self.BOUNDARY2, contract)
        assert "failed checks without findings: SEC-05" in result.detail

    def test_finding_without_failed_check(self, contract, state):
        """Every finding needs a failed check."""
        finding = {
            "check_id": "SEC-05",
            "severity": {"level": "MEDIUM"},
            "evidence": [{"path": "app.py"}],
            "explanation": "x",
            "remediation": "y",
        }
        checks = [{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}]
        result = validate(self._complete(checks, findings=[finding]), state, self.BOUNDARY2, contract)
        assert "findings for checks that did not fail" in result.detail

    def test_missing_required_output(self, contract, state):
        """Required outputs must be written."""
        checks = [{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}]
        result = validate(self._complete(checks, file_updates=[]), state, self.BOUNDARY2, contract)
        assert "required outputs not written" in result.detail

    def test_kernel_paths_are_reserved(self, contract, state):
        """Kernel-written paths are off limits to agents."""
        checks = [{"check_id": "SEC-01", "status": "pass"}, {"check_id": "SEC-05", "status": "pass"}]
        updates = [self.NARRATIVE, {"path": "reports/phase2/secrets/results.json", "content": "{}"}]
        result = validate(self._complete(checks, file_updates=updates), state, self.BOUNDARY2, contract)
        assert _code(result) == RejectionCode.BOUNDARY_VIOLATION

    def test_intention_for_another_task(self, contract, state):
        """An intention for an undispatched task is status_mismatch."""
        state.tasks["T05"] = TaskView(task_id="T05", status=TaskStatus.IN_PROGRESS, owner=ME, phase=2, kind="domain_audit")
        result = validate(self._complete([{"check_id": "AUN-01", "status": "pass"}], task_id="T05"), state, self.BOUNDARY2, contract)
        assert _code(result) == RejectionCode.STATUS_MISMATCH

    def test_actor_other_than_dispatched_binding(self, contract, state):
        """Only the dispatched actor may act."""
        claim = Intention.model_validate({"action": "claim", "task_id": "T04", "actor": "intruder", "prior_status": "todo"})
        state.tasks["T04"] = TaskView(task_id="T04", phase=2, kind="domain_audit")
        result = validate(claim, state, self.BOUNDARY2, contract)
        assert _code(result) == RejectionCode.LOCK_VIOLATION

    def test_failed_verification_check(self, state):
        """A failed task verification check rejects the completion."""
        contract = TaskContract(task_id="T04", actor=ME, verification_check_ids=["T04.V1"])
        failed = {
            "check_id": "T04.V1",
            "status": "fail",
            "severity": {"level": "LOW"},
            "evidence": [{"path": "reports/phase2/secrets/narrative.md"}],
            "explanation": "Narrative incomplete.",
            "remediation": "Finish it.",
        }
        finding = {k: v for k, v in failed.items() if k != "status"}
        result = validate(self._complete([failed], findings=[finding]), state, self.BOUNDARY2, contract)
        assert "task verification T04.V1 failed" in result.detail
