"""
openaudit/agents/scripted.py — Replays pre-authored agent outputs.

A script is a JSON list. Each entry is either `[task_id, raw_text]` or
`{"task_id": ..., "expect": "claim"|"complete"|"block", "raw_text": ...}`.
Entries with `expect` are served only when the dispatch expects that action;
the rest are served in order per task.
"""

import json
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from openaudit.agents.base import AgentBinding, AgentOutput, BaseAgent
from openaudit.errors import ConfigError, DispatchError
from openaudit.logs import get_logger
from openaudit.types import Action

log = get_logger(__name__)


class ScriptEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task_id: str
    expect: Optional[Action] = None
    raw_text: str


def parse_script(data: object) -> List[ScriptEntry]:
    """
    Validate a decoded script document.

    Raises:
        ConfigError: If the document is not a list of valid entries
    """
    if not isinstance(data, list):
        raise ConfigError("agent script must be a JSON list")
    entries = []
    for index, item in enumerate(data):
        if isinstance(item, list):
            if len(item) != 2 or not all(isinstance(x, str) for x in item):
                raise ConfigError(f"script entry {index}: expected [task_id, raw_text]")
            item = {"task_id": item[0], "raw_text": item[1]}
        try:
            entries.append(ScriptEntry.model_validate(item))
        except ValidationError as e:
            raise ConfigError(f"script entry {index}: {e.errors()[0]['msg']}") from e
    return entries


def load_script(path: Union[str, Path]) -> List[ScriptEntry]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read agent script {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"agent script {path} is not valid JSON: {e}") from e
    return parse_script(data)


class ScriptedAgent(BaseAgent):
    """
    Deterministic agent backed by a script.

    Example:
        >>> agent = ScriptedAgent("auditor", [["T01", '{"action": "claim", ...}']])
        >>> agent.dispatch(pack).raw_text
        '{"action": "claim", ...}'
    """

    def __init__(self, name: str, entries: Sequence[Union[ScriptEntry, list, dict]]):
        self.name = name
        parsed = parse_script(
            [e.model_dump(mode="json", exclude_none=True) if isinstance(e, ScriptEntry) else e for e in entries]
        )
        self._expected: Dict[Tuple[str, Action], Deque[str]] = defaultdict(deque)
        self._any: Dict[str, Deque[str]] = defaultdict(deque)
        for entry in parsed:
            if entry.expect is not None:
                self._expected[(entry.task_id, entry.expect)].append(entry.raw_text)
            else:
                self._any[entry.task_id].append(entry.raw_text)

    @classmethod
    def from_binding(cls, binding: AgentBinding) -> "ScriptedAgent":
        if binding.script_path is None:
            raise ConfigError(f"agent {binding.name} has no script_path")
        return cls(binding.name, load_script(binding.script_path))

    def remaining(self, task_id: str) -> int:
        keyed = sum(len(q) for (t, _), q in self._expected.items() if t == task_id)
        return keyed + len(self._any[task_id])

    def dispatch(self, pack) -> AgentOutput:
        start = time.perf_counter()
        task_id = pack.task.task_id
        keyed = self._expected.get((task_id, pack.expected_action))
        if keyed:
            raw = keyed.popleft()
        elif self._any.get(task_id):
            raw = self._any[task_id].popleft()
        else:
            raise DispatchError(f"script of {self.name} is exhausted for {task_id}")
        latency = int((time.perf_counter() - start) * 1000)
        log.debug("scripted_dispatch", agent=self.name, task_id=task_id, expect=pack.expected_action.value)
        return AgentOutput(raw_text=raw, latency_ms=latency, attempt=1)
