"""Endpoint kinds: offline echo tasks and the emulated fixed-step DRTS.

An echo task periodically increments an integer-valued float, sends it,
and records the round trip when the value shows up again on its input.
The DRTS is a wall-clock paced loop that mirrors every input's latest
value to its paired output at each communication step.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field

from .bench import RttSample, make_sample
from .broker import BrokerClient
from .core import MS, WallClock, SignalRecord, Timestamp, WALL
from .errors import SessionClosed, PeerUnreachable, TransportDown
from .p2p import PeerClient, PeerDirectory, PeerServer
from .sync import pace_real_time


def task_out_topic(task_id: int) -> str:
    return f"task{task_id:02d}/out"


def task_in_topic(task_id: int) -> str:
    return f"task{task_id:02d}/in"


def drts_in_topic(pair: int) -> str:
    return f"drts/in{pair:02d}"


def drts_out_topic(pair: int) -> str:
    return f"drts/out{pair:02d}"


# ---------------------------------------------------------------------------
# Task-side ports


class BrokerTaskPort:
    """Echo task endpoint over the broker: publish out, subscribe to return."""

    def __init__(self, client: BrokerClient, task_id: int,
                 out_topic: str | None = None, in_topic: str | None = None):
        self.client = client
        self.out_topic = out_topic or task_out_topic(task_id)
        self.inbox: queue.Queue = queue.Queue()
        in_topic = in_topic or drts_out_topic(task_id)
        self._stream = client.subscribe(in_topic)
        clock = client.clock
        threading.Thread(target=self._watch, args=(clock,), daemon=True,
                         name=f"task{task_id}-watch").start()

    def _watch(self, clock: WallClock) -> None:
        while True:
            try:
                rec = self._stream.get()
            except Exception:
                return
            self.inbox.put((rec.value, clock.now()))

    def send(self, value: float, ts_ns: int, seq: int) -> None:
        try:
            self.client.publish(self.out_topic, value, ts_ns, seq, wait_ack=False)
        except SessionClosed as exc:
            raise TransportDown(str(exc)) from exc

    def close(self) -> None:
        self.client.close()


class P2pTaskPort:
    """Echo task endpoint over p2p: push to the DRTS-owned input cell,
    observe the local cell the DRTS mirrors back into."""

    def __init__(self, client: PeerClient, own_server: PeerServer, task_id: int,
                 clock: WallClock):
        self.client = client
        self.target = drts_in_topic(task_id)
        self.inbox: queue.Queue = queue.Queue()
        cell = own_server.cell(task_in_topic(task_id))
        cell.add_listener(lambda rec: self.inbox.put((rec.value, clock.now())))

    def send(self, value: float, ts_ns: int, seq: int) -> None:
        rec = SignalRecord(self.target, value, Timestamp(WALL, ts_ns), seq)
        try:
            self.client.set(rec, wait=False)
        except PeerUnreachable as exc:
            raise TransportDown(str(exc)) from exc

    def close(self) -> None:
        self.client.close()


# ---------------------------------------------------------------------------
# Echo task


@dataclass
class EchoResult:
    task_id: int
    samples: list[RttSample] = field(default_factory=list)
    lost: int = 0

    @property
    def sent(self) -> int:
        return len(self.samples) + self.lost


def run_echo_task(task_id: int, period_ns: int, n_samples: int, port,
                  clock: WallClock, timeout_factor: int = 10) -> EchoResult:
    """Send n_samples increments at the given period; match their return.

    Outstanding values time out after timeout_factor * period and are
    counted as lost (excluded from the sample list).
    """
    result = EchoResult(task_id)
    if n_samples == 0:
        return result
    pending: dict[float, Timestamp] = {}
    lock = threading.Lock()
    done = threading.Event()

    def watch():
        while not done.is_set():
            try:
                value, t_in = port.inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            with lock:
                t_out = pending.pop(value, None)
            if t_out is not None:
                result.samples.append(make_sample(task_id, value, t_out, t_in))

    watcher = threading.Thread(target=watch, daemon=True,
                               name=f"task{task_id}-match")
    watcher.start()

    x = 0.0
    try:
        for _ in pace_real_time(period_ns, ticks=n_samples):
            x += 1.0
            t_out = clock.now()
            with lock:
                pending[x] = t_out
            port.send(x, t_out.nanos, int(x))
        # grace period for stragglers
        deadline = time.monotonic_ns() + timeout_factor * period_ns
        while time.monotonic_ns() < deadline:
            with lock:
                if not pending:
                    break
            time.sleep(min(0.01, period_ns / 1e9))
    finally:
        done.set()
        watcher.join()
    with lock:
        result.lost = len(pending)
        pending.clear()
    return result


# ---------------------------------------------------------------------------
# Emulated DRTS


@dataclass(frozen=True)
class DrtsConfig:
    model_step_ns: int = 1 * MS
    comm_step_ns: int = 10 * MS
    n_io_pairs: int = 20

    def __post_init__(self):
        if self.comm_step_ns < self.model_step_ns:
            raise ValueError("comm_step must be >= model_step")


class BrokerDrtsPort:
    """DRTS endpoint over the broker."""

    def __init__(self, client: BrokerClient, n_pairs: int):
        self.client = client
        self.latest: dict[int, float] = {}
        self._lock = threading.Lock()
        for pair in range(1, n_pairs + 1):
            stream = client.subscribe(task_out_topic(pair))
            threading.Thread(target=self._watch, args=(pair, stream),
                             daemon=True, name=f"drts-in{pair}").start()

    def _watch(self, pair: int, stream) -> None:
        while True:
            try:
                rec = stream.get()
            except Exception:
                return
            with self._lock:
                self.latest[pair] = rec.value

    def read_inputs(self) -> dict[int, float]:
        with self._lock:
            return dict(self.latest)

    def send(self, pair: int, value: float, ts_ns: int, seq: int) -> None:
        self.client.publish(drts_out_topic(pair), value, ts_ns, seq,
                            wait_ack=False)

    def close(self) -> None:
        self.client.close()


class P2pDrtsPort:
    """DRTS endpoint over p2p: owns the drts/in cells, pushes mirrored
    values into each task's own return cell."""

    def __init__(self, server: PeerServer, client: PeerClient, n_pairs: int):
        self.server = server
        self.client = client
        self.n_pairs = n_pairs

    def read_inputs(self) -> dict[int, float]:
        values = {}
        for pair in range(1, self.n_pairs + 1):
            rec = self.server.cell(drts_in_topic(pair)).read_or_none()
            if rec is not None:
                values[pair] = rec.value
        return values

    def send(self, pair: int, value: float, ts_ns: int, seq: int) -> None:
        rec = SignalRecord(task_in_topic(pair), value, Timestamp(WALL, ts_ns), seq)
        self.client.set(rec, wait=False)

    def close(self) -> None:
        self.client.close()


@dataclass
class DrtsStats:
    model_steps: int = 0
    comm_flushes: int = 0
    overruns: int = 0
    transmitted: int = 0


class DrtsHandle:
    """Running emulated DRTS; fixed-step loop mirroring inputs to outputs."""

    def __init__(self, cfg: DrtsConfig, port, clock: WallClock):
        self.cfg = cfg
        self.port = port
        self.clock = clock
        self.stats = DrtsStats()
        # analog-style last-value-hold outputs, 0.0 until first mirror
        self.outputs = {pair: 0.0 for pair in range(1, cfg.n_io_pairs + 1)}
        self.error: Exception | None = None
        self._stop = threading.Event()
        self._seq = 0
        self._last_sent: dict[int, float] = {}
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="drts")
        self._thread.start()

    def _run(self) -> None:
        steps_per_flush = max(1, self.cfg.comm_step_ns // self.cfg.model_step_ns)
        try:
            for tick in pace_real_time(self.cfg.model_step_ns, stop=self._stop):
                self.stats.model_steps += 1
                if tick.overrun:
                    self.stats.overruns += 1
                if self.stats.model_steps % steps_per_flush == 0:
                    self._flush()
        except (SessionClosed, PeerUnreachable) as exc:
            self.error = TransportDown(str(exc))

    def _flush(self) -> None:
        self.stats.comm_flushes += 1
        now_ns = self.clock.nanos()
        for pair, value in self.port.read_inputs().items():
            # last-value-hold: retransmit only on change (links are reliable)
            if self._last_sent.get(pair) == value:
                continue
            self._seq += 1
            self.port.send(pair, value, now_ns, self._seq)
            self._last_sent[pair] = value
            self.outputs[pair] = value
            self.stats.transmitted += 1

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)
        self.port.close()


def run_drts(cfg: DrtsConfig, port, clock: WallClock) -> DrtsHandle:
    return DrtsHandle(cfg, port, clock)
