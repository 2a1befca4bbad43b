"""Shared timer service used for delayed (netem-shaped) message delivery."""

from __future__ import annotations

import heapq
import itertools
import threading
import time


class TimerService:
    """Single background thread firing callbacks at absolute monotonic times.

    Callbacks run on the timer thread and must be cheap (typically a queue
    put or a dispatch into a receive callback). Equal deadlines fire in
    schedule order.
    """

    def __init__(self):
        self._heap: list = []
        self._counter = itertools.count()
        self._cond = threading.Condition()
        self._stopped = False
        self._thread = threading.Thread(target=self._run, daemon=True, name="simbus-timer")
        self._thread.start()

    def schedule(self, delay_ns: int, callback) -> None:
        self.schedule_at(time.monotonic_ns() + max(0, delay_ns), callback)

    def schedule_at(self, at_ns: int, callback) -> None:
        """Schedule at an absolute monotonic deadline. Callers that order
        their own deadlines (FIFO shaping) must use this, not schedule():
        relative delays re-read the clock and can invert close deadlines."""
        at = at_ns
        with self._cond:
            if self._stopped:
                return
            heapq.heappush(self._heap, (at, next(self._counter), callback))
            self._cond.notify()

    def stop(self) -> None:
        with self._cond:
            self._stopped = True
            self._cond.notify()
        self._thread.join(timeout=5)

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._stopped and not self._heap:
                    self._cond.wait()
                if self._stopped:
                    return
                at, _, callback = self._heap[0]
                now = time.monotonic_ns()
                if at > now:
                    self._cond.wait(timeout=(at - now) / 1e9)
                    continue
                heapq.heappop(self._heap)
            try:
                callback()
            except Exception:  # pragma: no cover - callbacks must not kill the loop
                pass


_default: TimerService | None = None
_default_lock = threading.Lock()


def default_timer() -> TimerService:
    global _default
    with _default_lock:
        if _default is None:
            _default = TimerService()
        return _default
