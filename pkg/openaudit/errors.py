"""
openaudit/errors.py — Exception hierarchy for the audit kernel.

Input problems subclass ValueError so callers that only know about bad input
can still catch them. Protocol rejections are not exceptions; they are
`Rejection` values (see openaudit.protocol).
"""

from typing import Optional


class OpenAuditError(Exception):
    """Root of every error raised by openaudit."""


class SerializationError(OpenAuditError, ValueError):
    """A value cannot be encoded as canonical JSON."""


class EventStoreError(OpenAuditError):
    """Base class for event log failures."""


class AppendError(EventStoreError):
    """An event could not be persisted; the log is logically unchanged."""


class LogParseError(EventStoreError, ValueError):
    """A line of events.jsonl is not a well-formed event."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class IntegrityError(EventStoreError):
    """Sequence numbering or canonical form of the log is broken."""

    def __init__(self, sequence: int, message: str):
        self.sequence = sequence
        super().__init__(f"sequence {sequence}: {message}")


class ProjectionError(OpenAuditError):
    """The admitted log cannot be interpreted against the registry."""


class RegistryError(OpenAuditError, ValueError):
    """Base class for registry load failures."""


class RegistrySchemaError(RegistryError):
    """The registry document does not match the record schema."""


class RegistryCountError(RegistryError):
    """Phase, task, domain or check counts differ from the encoded coverage."""


class UnknownReferenceError(RegistryError):
    """A record refers to a domain, task or check that does not exist."""


class DependencyCycleError(RegistryError):
    """Task dependencies do not form a DAG."""


class PhaseOrderError(RegistryError):
    """A task depends on a task of a later phase."""


class ContextError(OpenAuditError):
    """A context pack cannot be built from the current state."""


class DispatchError(OpenAuditError):
    """An agent could not produce output for a dispatch."""


class ConsolidationError(OpenAuditError, ValueError):
    """Findings cannot be consolidated into an inventory."""


class ReportConsistencyError(OpenAuditError):
    """Report inputs were computed from a different state."""


class ConfigError(OpenAuditError, ValueError):
    """The run configuration is invalid."""


class RunDirectoryError(OpenAuditError):
    """The run directory is missing, not initialized, or already in use."""


class UnblockError(OpenAuditError):
    """An operator unblock request is not admissible."""


class RunAborted(OpenAuditError):
    """A run stopped fail-closed (broken chain, unprojectable log, missing artifacts)."""


class IntentionRejected(OpenAuditError):
    """Raised where an operation surfaces a protocol rejection as an error."""

    def __init__(self, rejection):
        self.rejection = rejection
        super().__init__(f"{rejection.code.value}: {rejection.detail}")


def describe(error: BaseException, limit: Optional[int] = 300) -> str:
    """One-line description of an error for diagnostics and block reasons."""
    text = f"{type(error).__name__}: {error}"
    if limit is not None and len(text) > limit:
        return text[:limit] + "..."
    return text
