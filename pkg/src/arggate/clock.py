"""Injectable clock. Timestamps are ISO-8601 UTC strings.

A fixed clock makes full pipeline runs reproducible byte for byte;
the system clock is the default everywhere else.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


def _fmt(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


class SystemClock:
    def now(self) -> str:
        return _fmt(datetime.now(timezone.utc))


class FixedClock:
    """Deterministic clock: starts at `start` and advances `step_seconds`
    on every call."""

    def __init__(self, start: str = "2026-01-01T00:00:00Z", step_seconds: int = 1):
        self._next = datetime.strptime(start, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
        self._step = timedelta(seconds=step_seconds)

    def now(self) -> str:
        stamp = _fmt(self._next)
        self._next = self._next + self._step
        return stamp
