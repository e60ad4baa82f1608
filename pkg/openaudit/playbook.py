"""
openaudit/playbook.py — Encoded audit coverage and task preparation.

The registry (phases, domains, checks, tasks) is data: a JSON document
validated at load time. This module also selects eligible tasks, builds the
purified context an agent sees for one task, and runs the deterministic
builtin checks.
"""

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from fnmatch import fnmatchcase
from pathlib import Path, PurePosixPath
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from openaudit import canonical
from openaudit.errors import (
    ContextError,
    DependencyCycleError,
    PhaseOrderError,
    RegistryCountError,
    RegistrySchemaError,
    UnknownReferenceError,
)
from openaudit.logs import get_logger
from openaudit.protocol import Boundary
from openaudit.types import (
    Action,
    AuditState,
    CheckResult,
    CheckStatus,
    CIAImpact,
    EvidenceLocation,
    Severity,
    SeverityLevel,
    TaskStatus,
)

log = get_logger(__name__)

DEFAULT_REGISTRY_PATH = Path(__file__).parent / "data" / "registry.json"

EXPECTED_PHASES = 4
EXPECTED_TASKS = 26
EXPECTED_DOMAINS = 16
EXPECTED_CHECKS = 95

SKIPPED_DIRS = {".git", ".hg", ".svn", "__pycache__", "node_modules", ".venv"}
MAX_EVIDENCE = 20
MAX_EXCERPT_CHARS = 160

DEFAULT_SCORE_WEIGHTS = {"CRITICAL": 25, "HIGH": 10, "MEDIUM": 4, "LOW": 1, "INFO": 0}


# ─── Registry records ─────────────────────────────────────────────────────────


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Phase(_Record):
    phase: int
    name: str
    report_dir: str


class Domain(_Record):
    domain_id: str
    name: str


class BuiltinRule(_Record):
    """
    Deterministic rule of a builtin check.

    Exactly one form is used:
      pattern  fail on any line of a `globs` file matching the regex
      require  fail when `globs` files exist but none match `require`
      forbid   fail when any file matches `globs`
    """
    globs: List[str] = Field(min_length=1)
    pattern: Optional[str] = None
    ignore_case: bool = False
    require: Optional[List[str]] = None
    forbid: bool = False

    @model_validator(mode="after")
    def _one_form(self):
        forms = [self.pattern is not None, self.require is not None, self.forbid]
        if sum(forms) != 1:
            raise ValueError("a builtin rule uses exactly one of pattern, require, forbid")
        if self.pattern is not None:
            try:
                re.compile(self.pattern)
            except re.error as e:
                raise ValueError(f"invalid pattern {self.pattern!r}: {e}") from e
        return self

    def compiled(self) -> "re.Pattern[str]":
        return re.compile(self.pattern or "", re.IGNORECASE if self.ignore_case else 0)


class Check(_Record):
    check_id: str
    domain_id: str
    title: str
    mode: Literal["builtin", "agent"]
    builtin_rule: Optional[BuiltinRule] = None
    default_severity: SeverityLevel
    cia_impact: CIAImpact = CIAImpact()
    remediation: str
    practice: str

    @model_validator(mode="after")
    def _rule_matches_mode(self):
        if (self.mode == "builtin") != (self.builtin_rule is not None):
            raise ValueError(f"{self.check_id}: builtin_rule is required exactly for builtin checks")
        # Validates INFO => no CIA impact.
        Severity(level=self.default_severity, cia_impact=self.cia_impact)
        return self


class TaskOutput(_Record):
    path: str
    producer: Literal["agent", "kernel"]
    artifact: str
    when: Literal["completion", "terminal"] = "completion"


class VerificationCheck(_Record):
    check_id: str
    title: str


class Task(_Record):
    task_id: str
    phase: int
    kind: str
    title: str
    domain_id: Optional[str] = None
    depends_on: List[str] = []
    boundary: List[str] = Field(min_length=1)
    outputs: List[TaskOutput] = []
    verification_checks: List[VerificationCheck] = []
    context_globs: List[str] = []

    @model_validator(mode="after")
    def _outputs_within_boundary(self):
        for prefix in self.boundary:
            if not prefix.startswith("reports/") or not prefix.endswith("/"):
                raise ValueError(f"{self.task_id}: boundary {prefix!r} must be a directory under reports/")
        for output in self.outputs:
            if not any(output.path.startswith(p) for p in self.boundary):
                raise ValueError(f"{self.task_id}: output {output.path} lies outside its boundary")
        return self


class Registry(_Record):
    """
    The whole audit coverage: 4 phases, 16 domains, 95 checks, 26 tasks.

    Use load_registry() to obtain a validated instance.
    """
    version: str = "1"
    phases: List[Phase]
    domains: List[Domain]
    checks: List[Check]
    tasks: List[Task]
    score_weights: Dict[SeverityLevel, int] = {
        SeverityLevel(k): v for k, v in DEFAULT_SCORE_WEIGHTS.items()
    }

    _digest: Optional[str] = PrivateAttr(default=None)

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical registry document."""
        if self._digest is None:
            self._digest = canonical.digest(self.model_dump(mode="json"))
        return self._digest

    def task(self, task_id: str) -> Task:
        for task in self.tasks:
            if task.task_id == task_id:
                return task
        raise KeyError(task_id)

    def check(self, check_id: str) -> Check:
        for check in self.checks:
            if check.check_id == check_id:
                return check
        raise KeyError(check_id)

    def has_check(self, check_id: str) -> bool:
        return any(c.check_id == check_id for c in self.checks)

    def domain(self, domain_id: str) -> Domain:
        for domain in self.domains:
            if domain.domain_id == domain_id:
                return domain
        raise KeyError(domain_id)

    def checks_for(self, task: Task) -> List[Check]:
        if task.domain_id is None:
            return []
        return [c for c in self.checks if c.domain_id == task.domain_id]

    def domain_task(self, domain_id: str) -> Task:
        for task in self.tasks:
            if task.domain_id == domain_id:
                return task
        raise KeyError(domain_id)

    def tasks_in_phase(self, phase: int) -> List[Task]:
        return [t for t in self.tasks if t.phase == phase]

    def phase_of_path(self, path: str) -> Optional[int]:
        for phase in self.phases:
            if path.startswith(phase.report_dir):
                return phase.phase
        for task in self.tasks:
            if any(path.startswith(p) for p in task.boundary):
                return task.phase
        return None

    @property
    def final_phase(self) -> int:
        return max(p.phase for p in self.phases)


def _expect_count(name: str, expected: int, found: int) -> None:
    if found != expected:
        raise RegistryCountError(f"{name}: expected {expected}, found {found}")


def _unique(name: str, ids: Iterable[str]) -> None:
    seen = set()
    for item in ids:
        if item in seen:
            raise RegistrySchemaError(f"duplicate {name} {item}")
        seen.add(item)


def validate_registry(registry: Registry) -> Registry:
    """
    Enforce the coverage invariants of a parsed registry.

    Raises:
        RegistryCountError: Counts differ from 4/26/16/95
        RegistrySchemaError: Duplicates or malformed phase-2 mapping
        UnknownReferenceError: Reference to a missing domain, task or check
        PhaseOrderError: A task depends on a task of a later phase
        DependencyCycleError: depends_on is not a DAG
    """
    _expect_count("phases", EXPECTED_PHASES, len(registry.phases))
    _expect_count("tasks", EXPECTED_TASKS, len(registry.tasks))
    _expect_count("domains", EXPECTED_DOMAINS, len(registry.domains))
    _expect_count("checks", EXPECTED_CHECKS, len(registry.checks))

    if [p.phase for p in registry.phases] != list(range(1, EXPECTED_PHASES + 1)):
        raise RegistrySchemaError("phases must be numbered 1..4 in order")
    _unique("domain", (d.domain_id for d in registry.domains))
    _unique("check", (c.check_id for c in registry.checks))
    _unique("task", (t.task_id for t in registry.tasks))
    _unique(
        "verification check",
        [c.check_id for c in registry.checks]
        + [v.check_id for t in registry.tasks for v in t.verification_checks],
    )

    domains = {d.domain_id for d in registry.domains}
    tasks = {t.task_id: t for t in registry.tasks}
    for check in registry.checks:
        if check.domain_id not in domains:
            raise UnknownReferenceError(f"check {check.check_id} references unknown domain {check.domain_id}")
    for task in registry.tasks:
        if task.phase not in range(1, EXPECTED_PHASES + 1):
            raise UnknownReferenceError(f"task {task.task_id} references unknown phase {task.phase}")
        if task.domain_id is not None and task.domain_id not in domains:
            raise UnknownReferenceError(f"task {task.task_id} references unknown domain {task.domain_id}")
        for dep in task.depends_on:
            if dep not in tasks:
                raise UnknownReferenceError(f"task {task.task_id} depends on unknown task {dep}")

    phase2 = registry.tasks_in_phase(2)
    _expect_count("phase-2 tasks", EXPECTED_DOMAINS, len(phase2))
    mapped = [t.domain_id for t in phase2]
    if None in mapped or sorted(mapped) != sorted(domains):
        raise RegistrySchemaError("every phase-2 task must map to exactly one distinct domain")
    for task in registry.tasks:
        if task.phase != 2 and task.domain_id is not None:
            raise RegistrySchemaError(f"task {task.task_id} outside phase 2 cannot own a domain")
        if task.domain_id is None and not task.verification_checks:
            raise RegistrySchemaError(f"task {task.task_id} needs at least one verification check")

    for task in registry.tasks:
        for dep in task.depends_on:
            if tasks[dep].phase > task.phase:
                raise PhaseOrderError(
                    f"task {task.task_id} (phase {task.phase}) depends on "
                    f"{dep} (phase {tasks[dep].phase})"
                )

    _check_acyclic(registry.tasks)

    for level, weight in registry.score_weights.items():
        if weight < 0:
            raise RegistrySchemaError(f"score weight for {level.value} must be non-negative")
    return registry


def _check_acyclic(tasks: Sequence[Task]) -> None:
    deps = {t.task_id: t.depends_on for t in tasks}
    state: Dict[str, int] = {}

    def visit(task_id: str, trail: List[str]) -> None:
        mark = state.get(task_id, 0)
        if mark == 2:
            return
        if mark == 1:
            cycle = trail[trail.index(task_id):] + [task_id]
            raise DependencyCycleError(f"dependency cycle: {' -> '.join(cycle)}")
        state[task_id] = 1
        for dep in deps[task_id]:
            visit(dep, trail + [task_id])
        state[task_id] = 2

    for task in tasks:
        visit(task.task_id, [])


def load_registry(path: Union[str, Path, None] = None) -> Registry:
    """
    Load and validate a registry document; all or nothing.

    Args:
        path: Registry JSON file (default: the shipped registry)

    Raises:
        RegistryError: Any invariant violation (see validate_registry)
    """
    path = Path(path) if path is not None else DEFAULT_REGISTRY_PATH
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise RegistrySchemaError(f"cannot read registry {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise RegistrySchemaError(f"registry {path} is not valid JSON: {e}") from e
    try:
        registry = Registry.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise RegistrySchemaError(f"registry {path}: {where}: {first['msg']}") from e
    validate_registry(registry)
    registry._digest = canonical.digest(document)
    return registry


def registry_digest(path: Union[str, Path, None] = None) -> str:
    """SHA-256 of the canonical bytes of a registry file."""
    path = Path(path) if path is not None else DEFAULT_REGISTRY_PATH
    return canonical.digest(json.loads(path.read_text(encoding="utf-8")))


def task_boundary(task: Task) -> Boundary:
    return Boundary(allowed_path_prefixes=list(task.boundary))


# ─── Task selection ───────────────────────────────────────────────────────────


def eligible_tasks(state: AuditState, registry: Registry) -> List[str]:
    """
    Todo tasks of the current phase whose dependencies are all done.

    Order is registry declaration order.
    """
    eligible = []
    for task in registry.tasks:
        view = state.tasks.get(task.task_id)
        if view is None or view.status != TaskStatus.TODO or task.phase != state.current_phase:
            continue
        if all(state.tasks[dep].status == TaskStatus.DONE for dep in task.depends_on):
            eligible.append(task.task_id)
    return eligible


# ─── Repository access ────────────────────────────────────────────────────────


def iter_files(root: Union[str, Path]) -> List[str]:
    """Relative POSIX paths of all regular files under root, sorted."""
    root = Path(root)
    if not root.is_dir():
        return []
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIPPED_DIRS)
        for name in filenames:
            full = Path(dirpath) / name
            if full.is_symlink() or not full.is_file():
                continue
            found.append(full.relative_to(root).as_posix())
    return sorted(found)


def matches_glob(path: str, pattern: str) -> bool:
    """
    Match a relative POSIX path against a registry glob.

    `*` crosses directory separators; a pattern without `/` is also tried
    against the file name, so "*.py" and "requirements.txt" match at any depth.
    """
    if fnmatchcase(path, pattern):
        return True
    return "/" not in pattern and fnmatchcase(PurePosixPath(path).name, pattern)


def select_files(files: Iterable[str], globs: Sequence[str]) -> List[str]:
    return [f for f in files if any(matches_glob(f, g) for g in globs)]


def _read_text(path: Path) -> Optional[str]:
    data = path.read_bytes()
    if b"\x00" in data:
        return None
    return data.decode("utf-8", errors="replace")


def numbered_lines(text: str) -> List[Tuple[int, str]]:
    """Lines numbered the way editors and git number them: only LF ends a line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [(number, line.rstrip("\r")) for number, line in enumerate(lines, start=1)]


# ─── Builtin checks ───────────────────────────────────────────────────────────


def _severity(check: Check) -> Severity:
    return Severity(level=check.default_severity, cia_impact=check.cia_impact)


def _fail(check: Check, evidence: List[EvidenceLocation], explanation: str) -> CheckResult:
    return CheckResult(
        check_id=check.check_id,
        status=CheckStatus.FAIL,
        severity=_severity(check),
        evidence=evidence,
        explanation=explanation,
        remediation=check.remediation,
    )


def _simple(check: Check, status: CheckStatus, explanation: str) -> CheckResult:
    return CheckResult(check_id=check.check_id, status=status, explanation=explanation)


def run_builtin_check(
    check: Check, repo_root: Union[str, Path], files: Optional[List[str]] = None
) -> CheckResult:
    """
    Execute a builtin check against a repository snapshot.

    Args:
        check: A registry check with mode "builtin"
        repo_root: Repository directory
        files: Pre-listed repository files (from iter_files), listed if omitted

    Returns:
        CheckResult with status pass, fail or not_applicable; failures carry
        (path, line) evidence that exists in the snapshot

    Raises:
        ValueError: If the check is not a builtin check
    """
    if check.mode != "builtin" or check.builtin_rule is None:
        raise ValueError(f"{check.check_id} is not a builtin check")
    rule = check.builtin_rule
    root = Path(repo_root)
    files = iter_files(root) if files is None else files
    candidates = select_files(files, rule.globs)

    if rule.forbid:
        if not candidates:
            return _simple(check, CheckStatus.PASS, "No forbidden files present.")
        evidence = [EvidenceLocation(path=p, excerpt="file present") for p in candidates[:MAX_EVIDENCE]]
        return _fail(check, evidence, f"{len(candidates)} forbidden file(s) present in the repository.")

    if not candidates:
        return _simple(
            check,
            CheckStatus.NOT_APPLICABLE,
            f"No files match {', '.join(rule.globs)}.",
        )

    if rule.require is not None:
        if select_files(files, rule.require):
            return _simple(check, CheckStatus.PASS, "Required companion files are present.")
        evidence = [
            EvidenceLocation(
                path=candidates[0],
                excerpt=f"no file matching {', '.join(rule.require)}",
            )
        ]
        return _fail(
            check,
            evidence,
            f"{len(candidates)} file(s) match {', '.join(rule.globs)} "
            f"but none match {', '.join(rule.require)}.",
        )

    regex = rule.compiled()
    evidence: List[EvidenceLocation] = []
    matched = 0
    for rel in candidates:
        try:
            text = _read_text(root / rel)
        except OSError as e:
            log.warning("builtin_check_unreadable", check_id=check.check_id, path=rel, error=str(e))
            return _simple(
                check,
                CheckStatus.NOT_APPLICABLE,
                f"Evidence gathering failed: {rel} could not be read ({e.strerror or e}).",
            )
        if text is None:
            continue
        for number, line in numbered_lines(text):
            if regex.search(line):
                matched += 1
                if len(evidence) < MAX_EVIDENCE:
                    evidence.append(
                        EvidenceLocation(path=rel, line=number, excerpt=line.strip()[:MAX_EXCERPT_CHARS])
                    )
    if not evidence:
        return _simple(check, CheckStatus.PASS, f"No matches in {len(candidates)} file(s).")
    return _fail(check, evidence, f"{matched} line(s) match the {check.title.lower()} rule.")


def run_builtin_checks(
    checks: Sequence[Check], repo_root: Union[str, Path], workers: int = 4
) -> List[CheckResult]:
    """Run builtin checks in parallel; results keep the order of `checks`."""
    builtin = [c for c in checks if c.mode == "builtin"]
    if not builtin:
        return []
    files = iter_files(repo_root)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda c: run_builtin_check(c, repo_root, files), builtin))


# ─── Context packs ────────────────────────────────────────────────────────────


class Excerpt(BaseModel):
    path: str
    content: str
    truncated: bool = False


class ArtifactContent(BaseModel):
    path: str
    task_id: str
    content: str


class ContextPack(BaseModel):
    """
    Everything an agent sees for one dispatch, and nothing else.

    No conversation history is carried; a pack is a pure function of the
    state, the registry and the repository snapshot.
    """
    task: Task
    checks: List[Check] = []
    builtin_results: List[CheckResult] = []
    repo_excerpts: List[Excerpt] = []
    dependency_artifacts: List[ArtifactContent] = []
    prior_status: TaskStatus
    expected_action: Action
    feedback: List[str] = []
    omitted_files: int = 0
    notes: List[str] = []


def _context_globs(task: Task, checks: Sequence[Check]) -> List[str]:
    globs: List[str] = list(task.context_globs)
    for check in checks:
        if check.builtin_rule is not None:
            for g in check.builtin_rule.globs + (check.builtin_rule.require or []):
                if g not in globs:
                    globs.append(g)
    return globs


def _collect_excerpts(
    sources: List[Tuple[str, Path]], budget: int
) -> Tuple[List["Excerpt"], int]:
    excerpts: List[Excerpt] = []
    remaining = budget
    omitted = 0
    for index, (label, full) in enumerate(sources):
        if remaining <= 0:
            omitted = len(sources) - index
            break
        try:
            text = _read_text(full)
        except OSError:
            continue
        if text is None:
            continue
        data = text.encode("utf-8")
        if len(data) <= remaining:
            excerpts.append(Excerpt(path=label, content=text))
            remaining -= len(data)
            continue
        cut = data[:remaining].decode("utf-8", errors="ignore")
        excerpts.append(Excerpt(path=label, content=cut, truncated=True))
        omitted = len(sources) - index - 1
        remaining = 0
        break
    return excerpts, omitted


def build_context(
    task_id: str,
    state: AuditState,
    repo_root: Union[str, Path],
    registry: Registry,
    run_dir: Union[str, Path, None] = None,
    docs_dir: Union[str, Path, None] = None,
    byte_budget: int = 65536,
    builtin_results: Optional[List[CheckResult]] = None,
    feedback: Sequence[str] = (),
) -> ContextPack:
    """
    Build the purified context pack for one task.

    Args:
        task_id: Task being dispatched
        state: Current projected state
        repo_root: Audited repository
        registry: Loaded registry
        run_dir: Run directory holding dependency artifacts
        docs_dir: Optional documentation directory (excerpts prefixed "docs/")
        byte_budget: Cap on excerpt content bytes; truncation is marked
        builtin_results: Kernel evaluation of the task's builtin checks
        feedback: Rejections from the current repair cycle

    Raises:
        ContextError: Unknown task or a missing dependency artifact
    """
    try:
        task = registry.task(task_id)
    except KeyError:
        raise ContextError(f"unknown task {task_id}") from None
    view = state.tasks.get(task_id)
    if view is None:
        raise ContextError(f"task {task_id} is not in the projected state")

    checks = registry.checks_for(task)
    globs = _context_globs(task, checks)
    root = Path(repo_root)
    sources = [(rel, root / rel) for rel in select_files(iter_files(root), globs)] if globs else []
    notes: List[str] = []
    if docs_dir is not None:
        docs_root = Path(docs_dir)
        sources += [(f"docs/{rel}", docs_root / rel) for rel in iter_files(docs_root)]
    elif task.kind == "recon":
        notes.append("No optional documentation directory was provided for this run.")
    excerpts, omitted = _collect_excerpts(sources, byte_budget)

    artifacts: List[ArtifactContent] = []
    for dep_id in task.depends_on:
        dep = registry.task(dep_id)
        for output in dep.outputs:
            if output.when != "completion":
                continue
            if output.path not in state.artifacts:
                raise ContextError(f"{dep_id} artifact {output.path} is not recorded in state")
            if run_dir is None:
                raise ContextError(f"{dep_id} artifact {output.path} needs a run directory")
            full = Path(run_dir) / output.path
            try:
                content = full.read_text(encoding="utf-8")
            except OSError as e:
                raise ContextError(f"{dep_id} artifact {output.path} is missing: {e}") from e
            artifacts.append(ArtifactContent(path=output.path, task_id=dep_id, content=content))

    expected = Action.CLAIM if view.status == TaskStatus.TODO else Action.COMPLETE
    return ContextPack(
        task=task,
        checks=checks,
        builtin_results=list(builtin_results or []),
        repo_excerpts=excerpts,
        dependency_artifacts=artifacts,
        prior_status=view.status,
        expected_action=expected,
        feedback=list(feedback),
        omitted_files=omitted,
        notes=notes,
    )
