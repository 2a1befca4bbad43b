"""Centralized publish/subscribe transport (the message-bus data core).

A broker routes every published :class:`~simbus.core.SignalRecord` to all
matching subscribers in per-link FIFO order. Clients connect either over
TCP (newline-delimited JSON frames) or in-process via memory links; both
paths speak the identical protocol and can be netem-shaped per leg.
"""

from __future__ import annotations

import logging
import queue
import re
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass

from . import frames
from .core import WallClock, SignalRecord, Timestamp, WALL
from .errors import (
    AddressInUse,
    BadPattern,
    ConnectionRefused,
    HandshakeTimeout,
    SessionClosed,
)
from .netem import LinkShaper, NetProfile
from .wire import Conn, MemoryConn, TcpConn, parse_address

log = logging.getLogger(__name__)

DROP_OLDEST = "drop_oldest"
DISCONNECT = "disconnect"


@dataclass(frozen=True)
class BrokerConfig:
    listen_address: str | None = None
    max_clients: int = 64
    queue_depth: int = 1024
    overflow: str = DROP_OLDEST

    def __post_init__(self):
        if self.queue_depth < 1:
            raise ValueError("queue_depth must be >= 1")
        if self.max_clients < 1:
            raise ValueError("max_clients must be >= 1")
        if self.overflow not in (DROP_OLDEST, DISCONNECT):
            raise ValueError(f"unknown overflow policy {self.overflow!r}")


_PATTERN_RE = re.compile(r"[A-Za-z0-9_./-]+$")


def validate_pattern(pattern: str) -> str:
    """Exact topic name, or a single trailing '/*' wildcard."""
    if not pattern:
        raise BadPattern("empty pattern")
    body = pattern[:-2] if pattern.endswith("/*") else pattern
    if "*" in body:
        raise BadPattern(f"bad wildcard in {pattern!r}")
    if not body or not _PATTERN_RE.match(body):
        raise BadPattern(f"bad topic characters in {pattern!r}")
    return pattern


def topic_matches(pattern: str, topic: str) -> bool:
    if pattern.endswith("/*"):
        return topic.startswith(pattern[:-1])
    return topic == pattern


@dataclass(frozen=True)
class Subscription:
    client_id: str
    pattern: str


class _ClientSlot:
    """Broker-side state for one connected client."""

    def __init__(self, client_id: str, conn: Conn, cfg: BrokerConfig):
        self.client_id = client_id
        self.conn = conn
        self.cfg = cfg
        self.patterns: list[str] = []
        self.out: deque = deque()
        self.dropped = 0
        self.cond = threading.Condition()
        self.closing = False
        self.writer = threading.Thread(target=self._write_loop, daemon=True,
                                       name=f"broker-out-{client_id}")
        self.writer.start()

    def enqueue(self, frame: dict) -> bool:
        """Queue a delivery; returns False if the client must be dropped."""
        with self.cond:
            if self.closing:
                return True
            if len(self.out) >= self.cfg.queue_depth:
                if self.cfg.overflow == DROP_OLDEST:
                    self.out.popleft()
                    self.dropped += 1
                else:
                    return False
            self.out.append(frame)
            self.cond.notify()
        return True

    def _write_loop(self) -> None:
        while True:
            with self.cond:
                while not self.out and not self.closing:
                    self.cond.wait()
                if not self.out and self.closing:
                    return
                frame = self.out.popleft()
                self.cond.notify_all()  # wake drain waiters
            try:
                self.conn.send(frame)
            except SessionClosed:
                return

    def drain_and_stop(self, timeout: float = 5.0) -> None:
        deadline = time.monotonic() + timeout
        with self.cond:
            while self.out and time.monotonic() < deadline:
                self.cond.wait(timeout=0.05)
            self.closing = True
            self.cond.notify_all()


class Broker:
    """Routing core. Use :func:`serve` or construct and call start()."""

    def __init__(self, cfg: BrokerConfig | None = None, clock: WallClock | None = None):
        self.cfg = cfg or BrokerConfig()
        self.clock = clock or WallClock()
        self._clients: dict[str, _ClientSlot] = {}
        self._lock = threading.Lock()
        self._next_id = 0
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._stopped = False

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "Broker":
        if self.cfg.listen_address:
            host, port = parse_address(self.cfg.listen_address)
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                sock.bind((host, port))
            except OSError as exc:
                raise AddressInUse(f"cannot bind {self.cfg.listen_address}: {exc}") from exc
            sock.listen(128)
            self._listener = sock
            self._accept_thread = threading.Thread(target=self._accept_loop,
                                                   daemon=True, name="broker-accept")
            self._accept_thread.start()
        return self

    @property
    def port(self) -> int:
        assert self._listener is not None
        return self._listener.getsockname()[1]

    def stop(self) -> None:
        self._stopped = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            slots = list(self._clients.values())
        for slot in slots:
            slot.drain_and_stop()
            slot.conn.close()
        with self._lock:
            self._clients.clear()

    # -- client admission ------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopped:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            with self._lock:
                full = len(self._clients) >= self.cfg.max_clients
            if full:
                sock.close()
                continue
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client_id = self._alloc_id()
            conn = TcpConn(sock, link_id=f"broker-{client_id}")
            self._admit(client_id, conn)

    def _alloc_id(self) -> str:
        with self._lock:
            self._next_id += 1
            return f"c{self._next_id}"

    def _admit(self, client_id: str, conn: Conn) -> None:
        slot = _ClientSlot(client_id, conn, self.cfg)
        with self._lock:
            self._clients[client_id] = slot
        conn.set_on_close(lambda: self._forget(client_id))
        conn.set_on_frame(lambda frame: self._on_frame(slot, frame))
        conn.send(frames.welcome_frame(client_id))

    def _forget(self, client_id: str) -> None:
        with self._lock:
            slot = self._clients.pop(client_id, None)
        if slot is not None:
            with slot.cond:
                slot.closing = True
                slot.cond.notify_all()

    def connect_memory(self,
                       to_broker: NetProfile | None = None,
                       from_broker: NetProfile | None = None,
                       link_id: str | None = None) -> "BrokerClient":
        """In-process session; optional shaped legs in each direction."""
        if self._stopped:
            raise ConnectionRefused("broker stopped")
        with self._lock:
            if len(self._clients) >= self.cfg.max_clients:
                raise ConnectionRefused("max_clients reached")
        client_id = self._alloc_id()
        lid = link_id or f"mem-{client_id}"
        broker_end, client_end = MemoryConn.pair(lid)
        if to_broker is not None and not to_broker.is_passthrough:
            broker_end.set_ingress_shaper(LinkShaper(to_broker, f"{lid}:up"))
        if from_broker is not None and not from_broker.is_passthrough:
            client_end.set_ingress_shaper(LinkShaper(from_broker, f"{lid}:down"))
        self._admit(client_id, broker_end)
        return BrokerClient(client_end, clock=self.clock)

    # -- routing ----------------------------------------------------------------

    def _on_frame(self, slot: _ClientSlot, frame: dict) -> None:
        op = frame.get("op")
        if op == "sub":
            try:
                pattern = validate_pattern(frame.get("topic", ""))
            except BadPattern:
                slot.conn.send(frames.err_frame("BadPattern", frame.get("topic", "")))
                return
            with self._lock:
                slot.patterns.append(pattern)
            slot.conn.send(frames.ack_frame(self.clock.nanos()))
        elif op == "pub":
            recv_ns = self.clock.nanos()
            topic = frame["topic"]
            out = frames.msg_frame(topic, frame["value"], frame["ts"], frame["seq"])
            with self._lock:
                targets = [s for s in self._clients.values()
                           if any(topic_matches(p, topic) for p in s.patterns)]
            for target in targets:
                if not target.enqueue(out):
                    log.warning("client %s overflow, disconnecting", target.client_id)
                    target.conn.close()
            try:
                slot.conn.send(frames.ack_frame(recv_ns))
            except SessionClosed:
                pass
        # unknown ops ignored


def serve(cfg: BrokerConfig) -> Broker:
    """Start a broker per config; returns the running handle."""
    return Broker(cfg).start()


class SubscriptionStream:
    """Client-side stream of records matching one subscription pattern."""

    def __init__(self, pattern: str, maxsize: int = 0):
        self.pattern = pattern
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)

    def get(self, timeout: float | None = None) -> SignalRecord:
        return self._q.get(timeout=timeout)

    def get_nowait(self) -> SignalRecord | None:
        try:
            return self._q.get_nowait()
        except queue.Empty:
            return None

    def __iter__(self):
        while True:
            yield self._q.get()


class BrokerClient:
    """One broker session: subscribe / publish / receive."""

    def __init__(self, conn: Conn, clock: WallClock | None = None,
                 recv_maxsize: int = 0):
        self.conn = conn
        self.clock = clock or WallClock()
        self.client_id: str | None = None
        self._streams: list[SubscriptionStream] = []
        self._acks: queue.Queue = queue.Queue()
        self._awaited = 0  # publishes/subscribes currently waiting for an ack
        self._welcome = threading.Event()
        self._seq: dict[str, int] = {}
        self._recv_maxsize = recv_maxsize
        self._lock = threading.Lock()
        self.on_record = None  # optional push callback, called before queueing
        conn.set_on_frame(self._on_frame)

    # -- connection -----------------------------------------------------------

    @staticmethod
    def connect(address: str, timeout: float = 5.0,
                clock: WallClock | None = None) -> "BrokerClient":
        host, port = parse_address(address)
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectionRefused(f"cannot connect to {address}: {exc}") from exc
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        client = BrokerClient(TcpConn(sock, link_id=f"client-{address}"), clock=clock)
        client.wait_welcome(timeout)
        return client

    def wait_welcome(self, timeout: float = 5.0) -> None:
        if not self._welcome.wait(timeout):
            self.close()
            raise HandshakeTimeout("no welcome from broker")
        if self.client_id is None:
            raise ConnectionRefused("broker refused the session")

    def close(self) -> None:
        self.conn.close()

    # -- frame handling ----------------------------------------------------------

    def _on_frame(self, frame: dict) -> None:
        op = frame.get("op")
        if op == "welcome":
            self.client_id = frame["client"]
            self._welcome.set()
        elif op == "ack":
            with self._lock:
                wanted = self._awaited > 0
            if wanted:
                self._acks.put(frame["ts"])
            # acks for fire-and-forget publishes are dropped
        elif op == "err":
            self._acks.put(BadPattern(frame.get("code", "err")))
        elif op == "msg":
            record = SignalRecord(
                signal=frame["topic"],
                value=frame["value"],
                send_ts=Timestamp(WALL, frame["ts"]),
                seq=frame["seq"],
            )
            if self.on_record is not None:
                self.on_record(record)
            with self._lock:
                streams = [s for s in self._streams
                           if topic_matches(s.pattern, record.signal)]
            for stream in streams:
                stream._q.put(record)  # blocks when bounded; backpressures broker

    # -- session operations ---------------------------------------------------

    def subscribe(self, pattern: str, timeout: float = 5.0) -> SubscriptionStream:
        validate_pattern(pattern)
        stream = SubscriptionStream(pattern, maxsize=self._recv_maxsize)
        with self._lock:
            self._streams.append(stream)
            self._awaited += 1
        self.conn.send(frames.sub_frame(pattern))
        result = self._await_ack(timeout)
        if isinstance(result, Exception):
            with self._lock:
                self._streams.remove(stream)
            raise result
        return stream

    def publish(self, topic: str, value: float, ts: int | None = None,
                seq: int | None = None, wait_ack: bool = True,
                timeout: float = 5.0) -> int | None:
        """Publish one sample; returns the broker receive timestamp when waited for."""
        if seq is None:
            with self._lock:
                seq = self._seq.get(topic, 0) + 1
                self._seq[topic] = seq
        if ts is None:
            ts = self.clock.nanos()
        if wait_ack:
            with self._lock:
                self._awaited += 1
        self.conn.send(frames.pub_frame(topic, value, ts, seq))
        if wait_ack:
            result = self._await_ack(timeout)
            if isinstance(result, Exception):
                raise result
            return result
        return None

    def publish_record(self, rec: SignalRecord, wait_ack: bool = True) -> int | None:
        return self.publish(rec.signal, rec.value, rec.send_ts.nanos, rec.seq,
                            wait_ack=wait_ack)

    def _await_ack(self, timeout: float):
        try:
            return self._acks.get(timeout=timeout)
        except queue.Empty:
            if self.conn.closed:
                raise SessionClosed("session closed") from None
            raise SessionClosed("no ack from broker (timeout)") from None
        finally:
            with self._lock:
                self._awaited -= 1
