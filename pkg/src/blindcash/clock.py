"""Injected time source so validity windows are testable deterministically."""

from __future__ import annotations

import threading
import time


class WallClock:
    def now(self) -> int:
        return int(time.time())


class SimClock:
    """Manually advanced epoch-seconds clock."""

    def __init__(self, start: int = 1_700_000_000):
        self._now = int(start)
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            return self._now

    def advance(self, seconds: int):
        with self._lock:
            self._now += int(seconds)

    def set(self, t: int):
        with self._lock:
            self._now = int(t)
