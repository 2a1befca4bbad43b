"""Signal model, clock domains and wiring configuration.

Everything that flows on the bus is a :class:`SignalRecord`: a scalar float
sample on a named signal, stamped with a scenario-relative nanosecond
timestamp and a per-sender sequence number.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

from .errors import (
    DirectionMismatch,
    DuplicateInputDriver,
    MixedClockDomain,
    NoCoordinator,
    UnknownSignal,
)

WALL = "wall"
SIM = "sim"

_NAME_RE = re.compile(r"^[A-Za-z0-9_./-]+$")

MS = 1_000_000  # nanoseconds per millisecond
US = 1_000
SEC = 1_000_000_000


@dataclass(frozen=True, order=False)
class Timestamp:
    """Scenario-relative instant in one clock domain (wall or sim)."""

    clock: str
    nanos: int

    def __post_init__(self):
        if self.clock not in (WALL, SIM):
            raise ValueError(f"unknown clock domain {self.clock!r}")
        if self.nanos < 0:
            raise ValueError("timestamps are non-negative")

    def _check_domain(self, other: "Timestamp") -> None:
        if not isinstance(other, Timestamp):
            raise TypeError(f"cannot compare Timestamp with {type(other)!r}")
        if other.clock != self.clock:
            raise MixedClockDomain(
                f"cannot mix {self.clock!r} and {other.clock!r} timestamps"
            )

    def __lt__(self, other):
        self._check_domain(other)
        return self.nanos < other.nanos

    def __le__(self, other):
        self._check_domain(other)
        return self.nanos <= other.nanos

    def __gt__(self, other):
        self._check_domain(other)
        return self.nanos > other.nanos

    def __ge__(self, other):
        self._check_domain(other)
        return self.nanos >= other.nanos

    def __sub__(self, other) -> int:
        """Difference in nanoseconds (may be negative)."""
        self._check_domain(other)
        return self.nanos - other.nanos


def wall_ts(nanos: int) -> Timestamp:
    return Timestamp(WALL, nanos)


def sim_ts(nanos: int) -> Timestamp:
    return Timestamp(SIM, nanos)


INPUT = "input"
OUTPUT = "output"


@dataclass(frozen=True)
class SignalId:
    name: str
    direction: str

    def __post_init__(self):
        if not _NAME_RE.match(self.name or ""):
            raise ValueError(f"bad signal name {self.name!r}")
        if self.direction not in (INPUT, OUTPUT):
            raise ValueError(f"bad direction {self.direction!r}")


@dataclass(frozen=True)
class SignalRecord:
    """One timestamped sample on a named signal."""

    signal: str
    value: float
    send_ts: Timestamp
    seq: int

    def __post_init__(self):
        if self.seq < 0:
            raise ValueError("seq must be non-negative")


@dataclass(frozen=True)
class StepConfig:
    """Step sizes of the timing hierarchy, nanoseconds."""

    offline_step: int = 500 * MS
    bus_min_step: int = 1 * MS
    drts_step: int = 1 * MS
    comm_step: int = 10 * MS
    controller_iface_step: int = 10 * US  # informational

    def __post_init__(self):
        for name in ("offline_step", "bus_min_step", "drts_step", "comm_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 100 * MS <= self.offline_step <= 2 * SEC:
            raise ValueError("offline_step outside [100 ms, 2 s]")
        if not 100 <= self.drts_step <= 1 * MS:
            raise ValueError("drts_step outside [100 ns, 1 ms]")
        if not self.offline_step >= self.bus_min_step >= self.drts_step:
            raise ValueError("require offline_step >= bus_min_step >= drts_step")


STRICT = "strict"
PERMISSIVE = "permissive"


@dataclass(frozen=True)
class WiringConfig:
    """Declarative map from output signals to input signals."""

    links: tuple = ()
    mode: str = STRICT

    @staticmethod
    def from_file(path) -> "WiringConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        links = tuple((item["from"], item["to"]) for item in doc["links"])
        return WiringConfig(links=links, mode=doc.get("mode", STRICT))

    def upstream_of(self, input_name: str) -> str | None:
        for src, dst in self.links:
            if dst == input_name:
                return src
        return None


def validate_wiring(wiring: WiringConfig, known: set[SignalId]) -> WiringConfig:
    """Check every link against the endpoint-declared signal set.

    Raises UnknownSignal, DirectionMismatch or (strict mode)
    DuplicateInputDriver; returns the config unchanged when valid.
    """
    by_name = {sid.name: sid for sid in known}
    seen_inputs: dict[str, str] = {}
    for src, dst in wiring.links:
        for name, want in ((src, OUTPUT), (dst, INPUT)):
            sid = by_name.get(name)
            if sid is None:
                raise UnknownSignal(f"link references unknown signal {name!r}")
            if sid.direction != want:
                raise DirectionMismatch(f"{name!r} is not an {want} signal")
        if src == dst:
            raise DirectionMismatch(f"self-link on {src!r}")
        if wiring.mode == STRICT:
            if dst in seen_inputs:
                raise DuplicateInputDriver(
                    f"input {dst!r} driven by both {seen_inputs[dst]!r} and {src!r}"
                )
            seen_inputs[dst] = src
    return wiring


class WallClock:
    """Monotone wall clock, nanoseconds since construction (scenario start)."""

    def __init__(self):
        self._epoch = time.monotonic_ns()

    def now(self) -> Timestamp:
        return Timestamp(WALL, time.monotonic_ns() - self._epoch)

    def nanos(self) -> int:
        return time.monotonic_ns() - self._epoch


def now(domain: str, coordinator=None) -> Timestamp:
    """Current time in the given clock domain.

    The sim domain requires an attached sync coordinator; its current
    granted time (scenario start = 0) is returned.
    """
    if domain == WALL:
        return _process_wall.now()
    if domain == SIM:
        if coordinator is None:
            raise NoCoordinator("sim clock requires a sync coordinator")
        return Timestamp(SIM, coordinator.sim_now())
    raise ValueError(f"unknown clock domain {domain!r}")


_process_wall = WallClock()
