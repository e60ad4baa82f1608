"""
openaudit/event_store.py — Append-only, hash-chained event log.

The log file (events.jsonl) holds one canonical-JSON event per line. Each
event's hash covers the previous event's hash, so any change to a stored
byte is detected by read_all or verify_chain.

Example:
    >>> log = EventLog(run_dir / "events.jsonl", clock=FixedClock("2026-01-01T00:00:00Z"))
    >>> event = log.emit(EventKind.RUN_INITIALIZED, "orchestrator", {"run_id": "run-1"})
    >>> verify_chain(read_all(log.path)).valid
    True
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from openaudit import canonical
from openaudit.clock import Clock, SystemClock
from openaudit.errors import AppendError, IntegrityError, LogParseError, SerializationError
from openaudit.logs import get_logger
from openaudit.types import ChainReport, Event, EventBody, EventKind

log = get_logger(__name__)

GENESIS_HASH = canonical.ZERO_HASH


def canonical_bytes(event: Union[Event, Dict[str, Any]]) -> bytes:
    """
    Canonical bytes of an event with the hash field absent.

    Raises:
        SerializationError: If the payload holds a non-JSON value
    """
    if isinstance(event, Event):
        data = event.model_dump(mode="json", exclude={"hash"})
    else:
        data = {k: v for k, v in event.items() if k != "hash"}
    return canonical.canonical_bytes(data)


def compute_hash(prev_hash: str, body: bytes) -> str:
    return canonical.sha256_hex(prev_hash.encode("ascii") + body)


def read_all(path: Union[str, Path]) -> List[Event]:
    """
    Read every event of a log file, in order.

    The whole read is rejected if any line is malformed, not in canonical
    form, or out of sequence. A missing file reads as an empty log.

    Raises:
        LogParseError: Malformed or partial line (1-based line number)
        IntegrityError: Sequence gap, duplicate, or non-canonical line
    """
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    if not data:
        return []

    lines = data.split(b"\n")
    if lines[-1] != b"":
        raise LogParseError(len(lines), "partial trailing line (no newline)")
    lines = lines[:-1]

    events: List[Event] = []
    for index, raw in enumerate(lines):
        line_number = index + 1
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise LogParseError(line_number, f"not valid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise LogParseError(line_number, "event is not a JSON object")
        try:
            event = Event.model_validate(obj)
        except ValidationError as e:
            raise LogParseError(line_number, f"not an event: {e.errors()[0]['msg']}") from e

        if event.sequence != index:
            raise IntegrityError(index, f"found sequence {event.sequence} at line {line_number}")
        try:
            encoded = canonical.canonical_bytes(obj)
        except SerializationError as e:
            raise IntegrityError(index, str(e)) from e
        if encoded != raw:
            raise IntegrityError(index, "line is not in canonical form")
        events.append(event)
    return events


def verify_chain(events: List[Event]) -> ChainReport:
    """Recompute every hash and prev_hash link; report the first divergence."""
    prev_hash = GENESIS_HASH
    for index, event in enumerate(events):
        problem: Optional[str] = None
        if event.sequence != index:
            problem = f"expected sequence {index}, found {event.sequence}"
        elif event.prev_hash != prev_hash:
            problem = "prev_hash does not match the previous event"
        else:
            try:
                expected = compute_hash(prev_hash, canonical_bytes(event))
            except SerializationError as e:
                expected, problem = "", str(e)
            if problem is None and expected != event.hash:
                problem = "hash does not match event content"
        if problem is not None:
            log.warning("chain_invalid", sequence=index, detail=problem)
            return ChainReport(
                valid=False,
                first_bad_sequence=index,
                events_checked=index + 1,
                detail=problem,
            )
        prev_hash = event.hash
    return ChainReport(valid=True, events_checked=len(events))


class EventLog:
    """
    Single-writer handle on one events.jsonl file.

    The first append verifies the existing log; appends onto a log whose
    chain is broken are refused.
    """

    def __init__(self, path: Union[str, Path], clock: Optional[Clock] = None):
        self.path = Path(path)
        self.clock = clock or SystemClock()
        self._tail_hash: Optional[str] = None
        self._next_sequence = 0
        self._size: Optional[int] = None

    def read(self) -> List[Event]:
        return read_all(self.path)

    def _load_tail(self) -> None:
        size = self.path.stat().st_size if self.path.exists() else 0
        if self._size == size and self._tail_hash is not None:
            return
        try:
            events = read_all(self.path)
        except (LogParseError, IntegrityError) as e:
            raise AppendError(f"refusing to append to an unreadable log: {e}") from e
        report = verify_chain(events)
        if not report.valid:
            raise AppendError(
                f"refusing to append: chain broken at sequence {report.first_bad_sequence}"
            )
        self._tail_hash = events[-1].hash if events else GENESIS_HASH
        self._next_sequence = len(events)
        self._size = size

    def append(self, body: EventBody) -> Event:
        """
        Chain and persist one event; the line is flushed before returning.

        Raises:
            AppendError: The log is invalid or the write failed
            SerializationError: The payload is not canonically encodable
        """
        self._load_tail()
        unsigned: Dict[str, Any] = {
            "sequence": self._next_sequence,
            "timestamp": body.timestamp,
            "actor": body.actor,
            "kind": body.kind.value,
            "payload": body.payload,
            "prev_hash": self._tail_hash,
        }
        event_hash = compute_hash(self._tail_hash, canonical_bytes(unsigned))
        event = Event.model_validate({**unsigned, "hash": event_hash})
        line = canonical.canonical_bytes(event) + b"\n"

        previous_size = self._size or 0
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())
        except OSError as e:
            self._size = None
            try:
                with open(self.path, "ab") as f:
                    f.truncate(previous_size)
            except OSError:
                pass
            raise AppendError(f"could not write event {event.sequence}: {e}") from e

        self._tail_hash = event.hash
        self._next_sequence += 1
        self._size = previous_size + len(line)
        log.debug("event_appended", sequence=event.sequence, kind=event.kind.value, actor=event.actor)
        return event

    def emit(self, kind: EventKind, actor: str, payload: Optional[Dict[str, Any]] = None) -> Event:
        """Stamp a timestamp from the clock and append."""
        body = EventBody(timestamp=self.clock.now(), kind=kind, actor=actor, payload=payload or {})
        return self.append(body)


def append(body: EventBody, event_log: EventLog) -> Event:
    """Append an event body to a log (see EventLog.append)."""
    return event_log.append(body)
