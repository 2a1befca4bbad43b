"""In-process link shaping: per-link delay, jitter, and loss.

Replaces the kernel netem/tc pair at desk scale. A :class:`LinkShaper` sits
between a link's raw receive path and the receiver's dispatch callback;
every message is delivered after an independently sampled delay, FIFO order
is enforced (message n+1 never overtakes message n), and lost messages are
silently dropped.
"""

from __future__ import annotations

import hashlib
import random
import threading
from dataclasses import dataclass

from .core import MS, US
from .errors import AlreadyShaped, UnknownPreset
from .timers import default_timer

JITTER_NONE = "none"
JITTER_UNIFORM = "uniform"
JITTER_NORMAL = "normal"


@dataclass(frozen=True)
class NetProfile:
    """One-way delay model for a single link leg."""

    name: str
    base_delay_ns: int = 0
    jitter: str = JITTER_NONE
    jitter_ns: int = 0  # uniform: half-width; normal: sigma
    loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.base_delay_ns < 0:
            raise ValueError("base_delay must be >= 0")
        if self.jitter not in (JITTER_NONE, JITTER_UNIFORM, JITTER_NORMAL):
            raise ValueError(f"unknown jitter kind {self.jitter!r}")
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss_prob must be in [0, 1)")

    def scaled(self, factor: float) -> "NetProfile":
        """Uniformly scaled copy (accelerated-clock runs)."""
        return NetProfile(
            name=f"{self.name}x{factor:g}",
            base_delay_ns=int(self.base_delay_ns * factor),
            jitter=self.jitter,
            jitter_ns=int(self.jitter_ns * factor),
            loss_prob=self.loss_prob,
            seed=self.seed,
        )

    def with_seed(self, seed: int) -> "NetProfile":
        return NetProfile(self.name, self.base_delay_ns, self.jitter,
                          self.jitter_ns, self.loss_prob, seed)

    def with_loss(self, loss_prob: float) -> "NetProfile":
        return NetProfile(self.name, self.base_delay_ns, self.jitter,
                          self.jitter_ns, loss_prob, self.seed)

    @property
    def is_passthrough(self) -> bool:
        return (self.base_delay_ns == 0 and self.jitter == JITTER_NONE
                and self.loss_prob == 0.0)


# Preset delay values are calibration targets chosen so that the 27-node
# OPF scenario's wall times rank LAN < 4G < 3G with ratios near 62:167:305 s
# (verified by the latency budget oracle); they are not measured network data.
_PRESETS = {
    "none": NetProfile("none"),
    "lan": NetProfile("lan", base_delay_ns=300 * US,
                      jitter=JITTER_UNIFORM, jitter_ns=100 * US),
    "4g": NetProfile("4g", base_delay_ns=25 * MS,
                     jitter=JITTER_NORMAL, jitter_ns=5 * MS),
    "3g": NetProfile("3g", base_delay_ns=65 * MS,
                     jitter=JITTER_NORMAL, jitter_ns=15 * MS),
}


def preset(name: str) -> NetProfile:
    try:
        return _PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"no preset named {name!r}") from None


def link_rng(seed: int, link_id: str) -> random.Random:
    """Independent per-link RNG stream derived from (seed, link id)."""
    digest = hashlib.sha256(f"{seed}:{link_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def sample_delay(profile: NetProfile, rng: random.Random) -> int:
    """One delay draw in nanoseconds, clamped at zero."""
    delay = profile.base_delay_ns
    if profile.jitter == JITTER_UNIFORM:
        delay += int(rng.uniform(-profile.jitter_ns, profile.jitter_ns))
    elif profile.jitter == JITTER_NORMAL:
        delay += int(rng.gauss(0.0, profile.jitter_ns))
    return max(0, delay)


class LinkShaper:
    """Applies a NetProfile to one directed link.

    FIFO is enforced netem-style: the scheduled delivery of message n+1 is
    never earlier than that of message n on the same link.
    """

    def __init__(self, profile: NetProfile, link_id: str, timer=None):
        self.profile = profile
        self.link_id = link_id
        self._rng = link_rng(profile.seed, link_id)
        self._timer = timer or default_timer()
        self._lock = threading.Lock()
        self._last_delivery_ns = 0  # monotonic deadline of previous message

    # loss models the data plane; session control (handshakes, acks) rides
    # a reliable stream and is only delayed, never dropped
    _LOSSY_OPS = frozenset({"pub", "msg", "set", "val"})

    def _droppable(self, item) -> bool:
        if isinstance(item, dict):
            return item.get("op") in self._LOSSY_OPS
        return True

    def deliver(self, item, deliver_fn) -> None:
        """Deliver item via deliver_fn after a sampled delay (or drop it)."""
        with self._lock:
            if (self.profile.loss_prob > 0.0 and self._droppable(item)
                    and self._rng.random() < self.profile.loss_prob):
                return
            if self.profile.is_passthrough:
                deliver_fn(item)
                return
            import time as _time
            now = _time.monotonic_ns()
            at = now + sample_delay(self.profile, self._rng)
            at = max(at, self._last_delivery_ns)
            self._last_delivery_ns = at
            self._timer.schedule_at(at, lambda: deliver_fn(item))


def attach(link, profile: NetProfile, link_id: str | None = None):
    """Shape a transport link (a connection end exposing set_ingress_shaper)."""
    shaper = LinkShaper(profile, link_id or getattr(link, "link_id", repr(link)))
    link.set_ingress_shaper(shaper)  # raises AlreadyShaped on double attach
    return link


def profile_from_config(doc: dict) -> NetProfile:
    """Parse the scenario-config `net` section."""
    if "profile" in doc:
        prof = preset(doc["profile"])
    else:
        prof = NetProfile(
            name=doc.get("name", "custom"),
            base_delay_ns=int(doc.get("base_delay_ms", 0) * MS),
            jitter=doc.get("jitter", JITTER_NONE),
            jitter_ns=int(doc.get("jitter_ms", 0) * MS),
            loss_prob=float(doc.get("loss_prob", 0.0)),
        )
    if "seed" in doc:
        prof = prof.with_seed(int(doc["seed"]))
    if "scale" in doc:
        prof = prof.scaled(float(doc["scale"]))
    return prof


__all__ = [
    "NetProfile", "preset", "sample_delay", "link_rng", "LinkShaper",
    "attach", "profile_from_config",
    "JITTER_NONE", "JITTER_UNIFORM", "JITTER_NORMAL",
]

# re-export for callers catching shaping errors
_ = AlreadyShaped
