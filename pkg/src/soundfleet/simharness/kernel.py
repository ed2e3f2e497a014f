"""Discrete-event core: a single-threaded heap of timestamped callbacks.

Virtual time is integer milliseconds since the scenario start. Events at
the same instant run in scheduling order, which makes whole runs
deterministic by construction.
"""

from __future__ import annotations

import heapq


class ClockRegressionError(Exception):
    pass


class SimKernel:
    def __init__(self):
        self.now_ms = 0
        self._heap: list = []
        self._order = 0

    def schedule(self, t_ms: int, fn) -> None:
        if t_ms < self.now_ms:
            raise ClockRegressionError(f"schedule at {t_ms} before now {self.now_ms}")
        heapq.heappush(self._heap, (t_ms, self._order, fn))
        self._order += 1

    def run_until(self, end_ms: int) -> None:
        """Process every event with t <= end_ms; time never moves backwards."""
        while self._heap and self._heap[0][0] <= end_ms:
            t_ms, _, fn = heapq.heappop(self._heap)
            if t_ms < self.now_ms:
                raise ClockRegressionError(f"event at {t_ms} after now {self.now_ms}")
            self.now_ms = t_ms
            fn(t_ms)
        self.now_ms = max(self.now_ms, end_ms)
