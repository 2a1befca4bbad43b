"""Deterministic echo scenario under the conservative sim-time scheme.

Components (echo tasks and the mirrored-loop DRTS) advance a shared
simulated clock through the :class:`~simbus.sync.Coordinator`; messages
carry simulated delivery timestamps (sampled from a seeded NetProfile,
floored by the sender's lookahead) and become visible to a receiver only
once its granted time covers them. Results are therefore a pure function
of the scenario and seed, independent of wall-clock scheduling: injected
scheduler jitter changes nothing.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field

from .bench import RttSample, compute_stats, make_sample
from .core import MS, SignalRecord, Timestamp, SIM
from .netem import NetProfile, link_rng, sample_delay
from .sync import Coordinator

LOOKAHEAD_NS = 1 * MS  # minimum output delay of every component (bus step)


@dataclass
class _SimMessage:
    delivery_ns: int
    sender: str
    seq: int
    record: SignalRecord


class SimBus:
    """Shaped sim-time links plus per-component mailboxes."""

    def __init__(self, profile: NetProfile, seed: int):
        self.profile = profile.with_seed(seed)
        self._lock = threading.Lock()
        self._mailboxes: dict[str, list[_SimMessage]] = {}
        self._rngs: dict[tuple[str, str], random.Random] = {}
        self._last_delivery: dict[tuple[str, str], int] = {}
        self._seq: dict[str, int] = {}
        self.trace: list[tuple[str, int, int]] = []  # (receiver, granted, send_ts)

    def add_component(self, component_id: str) -> None:
        self._mailboxes[component_id] = []

    def send(self, sender: str, receiver: str, signal: str, value: float,
             send_ns: int) -> None:
        key = (sender, receiver)
        with self._lock:
            rng = self._rngs.get(key)
            if rng is None:
                rng = link_rng(self.profile.seed, f"{sender}->{receiver}")
                self._rngs[key] = rng
            delay = max(LOOKAHEAD_NS, sample_delay(self.profile, rng))
            delivery = send_ns + delay
            # FIFO per link in sim time
            delivery = max(delivery, self._last_delivery.get(key, 0))
            self._last_delivery[key] = delivery
            seq = self._seq.get(sender, 0) + 1
            self._seq[sender] = seq
            rec = SignalRecord(signal, value, Timestamp(SIM, send_ns), seq)
            self._mailboxes[receiver].append(_SimMessage(delivery, sender, seq, rec))

    def take_ready(self, receiver: str, granted_ns: int) -> list[SignalRecord]:
        """Messages with delivery time <= granted, in deterministic order."""
        with self._lock:
            box = self._mailboxes[receiver]
            ready = [m for m in box if m.delivery_ns <= granted_ns]
            if ready:
                box[:] = [m for m in box if m.delivery_ns > granted_ns]
        ready.sort(key=lambda m: (m.delivery_ns, m.sender, m.seq))
        with self._lock:
            for m in ready:
                self.trace.append((receiver, granted_ns, m.record.send_ts.nanos))
        return [m.record for m in ready]


@dataclass
class SimEchoResult:
    samples: list[RttSample] = field(default_factory=list)
    lost: int = 0
    trace: list = field(default_factory=list)

    def stats_json(self) -> bytes:
        return compute_stats(self.samples, lost=self.lost).to_json_bytes()


def run_sim_echo(n_tasks: int = 4, period_ns: int = 500 * MS,
                 n_samples: int = 20, comm_step_ns: int = 10 * MS,
                 profile: NetProfile | None = None, seed: int = 0,
                 jitter: random.Random | None = None) -> SimEchoResult:
    """Run the echo benchmark entirely in simulated time.

    `jitter` injects random wall-clock sleeps before every component action
    to emulate hostile scheduling; it must not affect the result.
    """
    profile = profile or NetProfile("none")
    coord = Coordinator()
    bus = SimBus(profile, seed)
    result = SimEchoResult()
    lock = threading.Lock()
    drts_stop = threading.Event()

    task_ids = [f"task{i:02d}" for i in range(1, n_tasks + 1)]
    for tid in task_ids:
        coord.register(tid, upstreams={"drts"}, lookahead=LOOKAHEAD_NS)
        bus.add_component(tid)
    coord.register("drts", upstreams=set(task_ids), lookahead=LOOKAHEAD_NS)
    bus.add_component("drts")

    jlock = threading.Lock()

    def maybe_jitter():
        if jitter is not None:
            with jlock:
                delay = jitter.uniform(0.0, 0.002)
            time.sleep(delay)

    end_of_sends = n_samples * period_ns
    hard_stop = end_of_sends + 40 * period_ns

    # tasks advance at bus granularity so arrival times resolve at the
    # comm step, not the (much coarser) send period
    task_step_ns = min(comm_step_ns, period_ns)

    def task_body(index: int, tid: str):
        pending: dict[float, Timestamp] = {}
        x = 0.0
        sent = 0
        now = 0
        next_send = period_ns
        while True:
            maybe_jitter()
            now = coord.request_advance(tid, now + task_step_ns)
            for rec in bus.take_ready(tid, now):
                t_out = pending.pop(rec.value, None)
                if t_out is not None:
                    sample = make_sample(index, rec.value, t_out,
                                         Timestamp(SIM, now))
                    with lock:
                        result.samples.append(sample)
            if sent < n_samples and now >= next_send:
                x += 1.0
                pending[x] = Timestamp(SIM, now)
                bus.send(tid, "drts", f"{tid}/out", x, now)
                sent += 1
                next_send += period_ns
            if sent >= n_samples and (not pending or now >= hard_stop):
                break
        with lock:
            result.lost += len(pending)
        coord.finish(tid)

    def drts_body():
        latest: dict[str, float] = {}
        sent: dict[str, float] = {}
        now = 0
        while not drts_stop.is_set():
            maybe_jitter()
            now = coord.request_advance("drts", now + comm_step_ns)
            for rec in bus.take_ready("drts", now):
                latest[rec.signal] = rec.value
            for signal, value in sorted(latest.items()):
                if sent.get(signal) == value:
                    continue
                tid = signal.split("/")[0]
                bus.send("drts", tid, f"drts/{tid}", value, now)
                sent[signal] = value

    threads = [threading.Thread(target=task_body, args=(i + 1, tid),
                                name=tid, daemon=True)
               for i, tid in enumerate(task_ids)]
    drts_thread = threading.Thread(target=drts_body, name="sim-drts", daemon=True)
    for t in threads:
        t.start()
    drts_thread.start()
    for t in threads:
        t.join()
    drts_stop.set()
    drts_thread.join()

    # deterministic ordering of the collected samples
    result.samples.sort(key=lambda s: (s.task_id, s.t_out.nanos))
    result.trace = list(bus.trace)
    return result
