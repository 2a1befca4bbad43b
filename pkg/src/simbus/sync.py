"""Synchronization schemes: wall-clock pacing and conservative sim time.

The sim-time scheme is a conservative coordinator: a component advances to
time t only once every upstream guarantees it will emit nothing that could
arrive before t. Each component declares a lookahead, the minimum delay
between its local time and the effective timestamp of anything it sends;
positive lookahead is what keeps cyclic topologies (echo loops) live.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .errors import DeadlockDetected, UnknownComponent

REAL_TIME = "real_time"
SIM_TIME = "sim_time"


@dataclass
class ComponentClock:
    component_id: str
    scheme: str = SIM_TIME
    lookahead: int = 0  # nanoseconds
    upstreams: set = field(default_factory=set)
    granted: int = 0
    requested: int | None = None  # pending request while blocked
    finished: bool = False


class Coordinator:
    """Single serialization point for sim-time grants; thread-safe."""

    def __init__(self):
        self._cond = threading.Condition()
        self._components: dict[str, ComponentClock] = {}
        self._dead = False

    def register(self, component_id: str, upstreams: set | None = None,
                 lookahead: int = 0, scheme: str = SIM_TIME) -> ComponentClock:
        with self._cond:
            clock = ComponentClock(component_id, scheme=scheme,
                                   lookahead=lookahead,
                                   upstreams=set(upstreams or ()))
            self._components[component_id] = clock
            return clock

    def sim_now(self) -> int:
        """Scenario sim time: the slowest registered component's granted time."""
        with self._cond:
            if not self._components:
                return 0
            return min(c.granted for c in self._components.values())

    def granted(self, component_id: str) -> int:
        with self._cond:
            return self._require(component_id).granted

    def _require(self, component_id: str) -> ComponentClock:
        clock = self._components.get(component_id)
        if clock is None:
            raise UnknownComponent(component_id)
        return clock

    def _horizon(self, clock: ComponentClock) -> int:
        """Lower bound on the effective timestamp of anything the component
        may still send. While blocked on a request its work up to the granted
        time is complete, so the bound moves to the requested time."""
        if clock.finished:
            return 1 << 62
        base = clock.granted
        if clock.requested is not None and clock.lookahead > 0:
            # the refinement to the requested time is only sound with a
            # strictly positive output delay; without one, a peer granted the
            # same instant could still inject input at the boundary
            base = clock.requested
        return base + clock.lookahead

    def _grantable(self, clock: ComponentClock, to: int) -> bool:
        for upstream_id in clock.upstreams:
            upstream = self._components.get(upstream_id)
            if upstream is None:
                raise UnknownComponent(upstream_id)
            if self._horizon(upstream) < to:
                return False
        return True

    def request_advance(self, component_id: str, to: int) -> int:
        """Block until safe, then grant exactly `to`. Raises DeadlockDetected
        when every registered component is blocked and none can be granted."""
        with self._cond:
            clock = self._require(component_id)
            if to <= clock.granted:
                raise ValueError(f"request {to} not beyond granted {clock.granted}")
            clock.requested = to
            self._cond.notify_all()
            while True:
                if self._dead:
                    raise DeadlockDetected("conservative sync deadlock")
                if self._grantable(clock, to):
                    clock.granted = to
                    clock.requested = None
                    self._cond.notify_all()
                    return to
                if self._all_stuck():
                    self._dead = True
                    self._cond.notify_all()
                    raise DeadlockDetected("conservative sync deadlock")
                self._cond.wait(timeout=1.0)

    def _all_stuck(self) -> bool:
        # Deadlock iff every component has a pending request and none is
        # grantable; horizons only move on grants, so no progress is possible.
        clocks = [c for c in self._components.values() if not c.finished]
        if any(c.requested is None for c in clocks):
            return False
        return not any(self._grantable(c, c.requested) for c in clocks)

    def finish(self, component_id: str) -> None:
        """Mark a component done; it no longer gates anyone's progress."""
        with self._cond:
            self._require(component_id).finished = True
            self._cond.notify_all()


@dataclass(frozen=True)
class Tick:
    index: int
    deadline_ns: int  # scheduled wall time, scenario-relative
    lateness_ns: int
    overrun: bool


def pace_real_time(step_ns: int, ticks: int | None = None,
                   stop: threading.Event | None = None):
    """Generator of wall-clock ticks at multiples of step_ns.

    Lateness is measured at each yield; a tick later than one full step is
    flagged as an overrun (overruns are data, not errors).
    """
    if step_ns < 100:
        raise ValueError("step must be >= 100 ns")
    epoch = time.monotonic_ns()
    index = 0
    while ticks is None or index < ticks:
        if stop is not None and stop.is_set():
            return
        deadline = epoch + (index + 1) * step_ns
        now = time.monotonic_ns()
        if deadline > now:
            time.sleep((deadline - now) / 1e9)
        now = time.monotonic_ns()
        lateness = max(0, now - deadline)
        yield Tick(index=index, deadline_ns=deadline - epoch,
                   lateness_ns=lateness, overrun=lateness > step_ns)
        index += 1
