"""
openaudit/clock.py — Timestamp sources.

Events are stamped from a Clock. The fixed clock makes replay-equivalence
tests exact: the timestamp of event N depends only on N.
"""

from datetime import datetime, timedelta, timezone
from typing import Protocol


def format_timestamp(moment: datetime) -> str:
    """UTC ISO-8601 text with a trailing Z and second precision."""
    moment = moment.astimezone(timezone.utc).replace(microsecond=0)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-8601 text (a trailing Z is accepted) as an aware datetime."""
    moment = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment


class Clock(Protocol):
    def now(self) -> str: ...


class SystemClock:
    """Wall-clock time in UTC."""

    def now(self) -> str:
        return format_timestamp(datetime.now(timezone.utc))


class FixedClock:
    """
    Deterministic clock: start, start+step, start+2*step, ...

    Example:
        >>> clock = FixedClock("2026-01-01T00:00:00Z", step_seconds=1, ticks=2)
        >>> clock.now()
        '2026-01-01T00:00:02Z'
    """

    def __init__(self, start: str, step_seconds: int = 1, ticks: int = 0):
        self._start = parse_timestamp(start)
        self._step = timedelta(seconds=step_seconds)
        self._ticks = ticks

    def now(self) -> str:
        moment = self._start + self._step * self._ticks
        self._ticks += 1
        return format_timestamp(moment)
