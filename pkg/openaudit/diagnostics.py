"""
diagnostics.py — Non-authoritative records kept beside the event log.

Dispatches and rejections never enter events.jsonl; they are written here so
operators can inspect repair cycles and replay a run with a scripted agent.
Records are stamped with wall-clock time, not the event clock.
"""

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Type, TypeVar, Union

from pydantic import BaseModel, Field, ValidationError

from openaudit.logs import get_logger
from openaudit.types import Action

log = get_logger(__name__)

DIAGNOSTICS_DIR = "diagnostics"
DISPATCHES_FILE = "dispatches.jsonl"
REJECTIONS_FILE = "rejections.jsonl"

R = TypeVar("R", bound=BaseModel)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class DispatchRecord(BaseModel):
    """One agent dispatch and its verbatim output."""
    task_id: str
    actor: str
    expected_action: Action
    attempt: int
    raw_text: Optional[str] = None
    latency_ms: int = 0
    outcome: str
    error: Optional[str] = None
    recorded_at: str = Field(default_factory=_now)


class RejectionRecord(BaseModel):
    """One rejected intention."""
    task_id: str
    actor: str
    code: str
    detail: str
    attempt: int
    raw_text: Optional[str] = None
    recorded_at: str = Field(default_factory=_now)


class Diagnostics:
    """Append-only JSONL files under <run_dir>/diagnostics/."""

    def __init__(self, run_dir: Union[str, Path]):
        self.root = Path(run_dir) / DIAGNOSTICS_DIR

    def _append(self, name: str, record: BaseModel) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / name, "a", encoding="utf-8") as f:
            f.write(record.model_dump_json() + "\n")

    def _read(self, name: str, model: Type[R]) -> List[R]:
        path = self.root / name
        if not path.exists():
            return []
        records = []
        for number, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
            if not line.strip():
                continue
            try:
                records.append(model.model_validate_json(line))
            except ValidationError:
                # Diagnostics are advisory; a damaged line is skipped, not fatal.
                log.warning("diagnostics_line_skipped", file=name, line=number)
        return records

    def record_dispatch(self, record: DispatchRecord) -> None:
        self._append(DISPATCHES_FILE, record)

    def record_rejection(self, record: RejectionRecord) -> None:
        self._append(REJECTIONS_FILE, record)

    def dispatches(self) -> List[DispatchRecord]:
        return self._read(DISPATCHES_FILE, DispatchRecord)

    def rejections(self) -> List[RejectionRecord]:
        return self._read(REJECTIONS_FILE, RejectionRecord)

    def rejection_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for record in self.rejections():
            counts[record.code] = counts.get(record.code, 0) + 1
        return dict(sorted(counts.items()))

    def export_script(self, output: Union[str, Path], actor: Optional[str] = None) -> int:
        """
        Write recorded outputs as a scripted-agent script.

        Args:
            output: Destination JSON file
            actor: Only export dispatches to this agent

        Returns:
            Number of entries written
        """
        entries = [
            {"task_id": d.task_id, "expect": d.expected_action.value, "raw_text": d.raw_text}
            for d in self.dispatches()
            if d.raw_text is not None and (actor is None or d.actor == actor)
        ]
        Path(output).write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
        return len(entries)
