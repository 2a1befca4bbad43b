"""Decentralized transport: every endpoint embeds a signal server.

Each signal has exactly one owning server holding a last-value cell;
clients fetch (`get`) or push (`set`) by direct request/response, with no
intermediate bus. Stale writes (seq not above the cell's current seq) are
rejected, which keeps cells monotone without any clock comparison.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
from dataclasses import dataclass, field

from . import frames
from .core import WallClock, SignalRecord, Timestamp, WALL
from .errors import (
    AddressInUse,
    EmptySignal,
    PeerUnreachable,
    SessionClosed,
    UnknownSignal,
)
from .netem import LinkShaper, NetProfile
from .wire import Conn, MemoryConn, TcpConn, parse_address

# Process-local registry of in-memory peer servers, keyed by "mem:<name>".
_MEM_SERVERS: dict[str, "PeerServer"] = {}
_MEM_LOCK = threading.Lock()


class SignalCell:
    """Last-value cell with seq-monotone replacement."""

    def __init__(self, name: str, clock: WallClock):
        self.name = name
        self._clock = clock
        self._lock = threading.Lock()
        self.latest: SignalRecord | None = None
        self.updated_at: Timestamp | None = None
        self._listeners: list = []

    def write(self, rec: SignalRecord) -> bool:
        """Apply rec iff its seq is above the current one; returns applied."""
        with self._lock:
            if self.latest is not None and rec.seq <= self.latest.seq:
                return False
            self.latest = rec
            self.updated_at = self._clock.now()
            listeners = list(self._listeners)
        for fn in listeners:
            fn(rec)
        return True

    def read(self) -> SignalRecord:
        with self._lock:
            if self.latest is None:
                raise EmptySignal(f"signal {self.name!r} has no value yet")
            return self.latest

    def read_or_none(self) -> SignalRecord | None:
        with self._lock:
            return self.latest

    def add_listener(self, fn) -> None:
        """fn(record) fires after each applied write (owner-local observation)."""
        with self._lock:
            self._listeners.append(fn)


@dataclass(frozen=True)
class PeerDirectory:
    """Static map from signal name to the owning server's address."""

    owners: dict = field(default_factory=dict)

    @staticmethod
    def from_file(path) -> "PeerDirectory":
        with open(path, encoding="utf-8") as fh:
            return PeerDirectory(dict(json.load(fh)))

    def owner_of(self, name: str) -> str:
        try:
            return self.owners[name]
        except KeyError:
            raise UnknownSignal(f"{name!r} not in peer directory") from None


class PeerServer:
    """Serves read/write on a set of owned signals, over memory or TCP."""

    def __init__(self, owned: set[str], listen_address: str | None = None,
                 mem_name: str | None = None, clock: WallClock | None = None):
        self.clock = clock or WallClock()
        self.cells = {name: SignalCell(name, self.clock) for name in owned}
        self.mem_name = mem_name
        self._listener: socket.socket | None = None
        self._stopped = False
        if mem_name is not None:
            with _MEM_LOCK:
                _MEM_SERVERS[f"mem:{mem_name}"] = self
        if listen_address is not None:
            host, port = parse_address(listen_address)
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                sock.bind((host, port))
            except OSError as exc:
                raise AddressInUse(f"cannot bind {listen_address}: {exc}") from exc
            sock.listen(128)
            self._listener = sock
            threading.Thread(target=self._accept_loop, daemon=True,
                             name="peer-accept").start()

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
        if self.mem_name is not None:
            with _MEM_LOCK:
                _MEM_SERVERS.pop(f"mem:{self.mem_name}", None)

    # -- local owner access ---------------------------------------------------

    def cell(self, name: str) -> SignalCell:
        try:
            return self.cells[name]
        except KeyError:
            raise UnknownSignal(f"{name!r} not owned by this server") from None

    def write_local(self, rec: SignalRecord) -> bool:
        return self.cell(rec.signal).write(rec)

    # -- connections ----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopped:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = TcpConn(sock, link_id=f"peer-srv-{id(sock)}")
            self.attach_conn(conn)

    def attach_conn(self, conn: Conn) -> None:
        conn.set_on_frame(lambda frame: self._on_frame(conn, frame))

    def connect_memory(self,
                       to_server: NetProfile | None = None,
                       from_server: NetProfile | None = None,
                       link_id: str | None = None) -> Conn:
        lid = link_id or f"peer-{self.mem_name}-{id(self)}"
        server_end, client_end = MemoryConn.pair(lid)
        if to_server is not None and not to_server.is_passthrough:
            server_end.set_ingress_shaper(LinkShaper(to_server, f"{lid}:req"))
        if from_server is not None and not from_server.is_passthrough:
            client_end.set_ingress_shaper(LinkShaper(from_server, f"{lid}:resp"))
        self.attach_conn(server_end)
        return client_end

    # -- request handling -------------------------------------------------------

    def _on_frame(self, conn: Conn, frame: dict) -> None:
        op = frame.get("op")
        try:
            if op == "get":
                cell = self.cells.get(frame["topic"])
                if cell is None:
                    conn.send(frames.err_frame("UnknownSignal", frame["topic"]))
                    return
                rec = cell.read_or_none()
                if rec is None:
                    conn.send(frames.err_frame("Empty", frame["topic"]))
                    return
                conn.send(frames.val_frame(rec.signal, rec.value,
                                           rec.send_ts.nanos, rec.seq))
            elif op == "set":
                cell = self.cells.get(frame["topic"])
                if cell is None:
                    conn.send(frames.err_frame("UnknownSignal", frame["topic"]))
                    return
                rec = SignalRecord(frame["topic"], frame["value"],
                                   Timestamp(WALL, frame["ts"]), frame["seq"])
                applied = cell.write(rec)
                conn.send(frames.setack_frame(frame["topic"], applied))
        except SessionClosed:
            pass


class PeerClient:
    """Blocking get/set against the owners listed in a directory."""

    def __init__(self, directory: PeerDirectory, timeout: float = 1.0,
                 profile_to: NetProfile | None = None,
                 profile_from: NetProfile | None = None,
                 link_id: str | None = None):
        self.directory = directory
        self.timeout = timeout
        self._profile_to = profile_to
        self._profile_from = profile_from
        self._link_id = link_id or f"peercli-{id(self)}"
        self._conns: dict[str, Conn] = {}
        self._replies: dict[str, queue.Queue] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def close(self) -> None:
        with self._guard:
            conns = list(self._conns.values())
            self._conns.clear()
        for conn in conns:
            conn.close()

    def _conn_for(self, address: str) -> tuple[Conn, queue.Queue, threading.Lock]:
        with self._guard:
            conn = self._conns.get(address)
            if conn is not None and not conn.closed:
                return conn, self._replies[address], self._locks[address]
        if address.startswith("mem:"):
            with _MEM_LOCK:
                server = _MEM_SERVERS.get(address)
            if server is None:
                raise PeerUnreachable(f"no in-memory server at {address!r}")
            conn = server.connect_memory(self._profile_to, self._profile_from,
                                         link_id=f"{self._link_id}->{address}")
        else:
            host, port = parse_address(address)
            try:
                sock = socket.create_connection((host, port), timeout=self.timeout)
            except OSError as exc:
                raise PeerUnreachable(f"cannot reach {address}: {exc}") from exc
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = TcpConn(sock, link_id=f"{self._link_id}->{address}")
        replies: queue.Queue = queue.Queue()
        conn.set_on_frame(replies.put)
        with self._guard:
            self._conns[address] = conn
            self._replies[address] = replies
            self._locks[address] = threading.Lock()
            return conn, replies, self._locks[address]

    _EXPECTED_REPLY = {"get": "val", "set": "setack"}

    def _request(self, address: str, frame: dict, wait: bool = True) -> dict | None:
        conn, replies, lock = self._conn_for(address)
        expected = self._EXPECTED_REPLY[frame["op"]]
        with lock:  # one outstanding awaited request per connection
            try:
                conn.send(frame)
            except SessionClosed as exc:
                raise PeerUnreachable(str(exc)) from exc
            if not wait:
                return None
            # Skip replies to earlier fire-and-forget requests on this link.
            while True:
                try:
                    reply = replies.get(timeout=self.timeout)
                except queue.Empty:
                    raise PeerUnreachable(f"no reply from {address}") from None
                if reply.get("op") == "err" or (
                        reply.get("op") == expected
                        and reply.get("topic") == frame["topic"]):
                    break
        if reply.get("op") == "err":
            code = reply.get("code")
            if code == "UnknownSignal":
                raise UnknownSignal(reply.get("detail", ""))
            if code == "Empty":
                raise EmptySignal(reply.get("detail", ""))
            raise PeerUnreachable(f"peer error {code}")
        return reply

    def get(self, name: str) -> SignalRecord:
        address = self.directory.owner_of(name)
        reply = self._request(address, frames.get_frame(name))
        return SignalRecord(reply["topic"], reply["value"],
                            Timestamp(WALL, reply["ts"]), reply["seq"])

    def set(self, rec: SignalRecord, wait: bool = True) -> bool | None:
        address = self.directory.owner_of(rec.signal)
        reply = self._request(
            address,
            frames.set_frame(rec.signal, rec.value, rec.send_ts.nanos, rec.seq),
            wait=wait,
        )
        if reply is None:
            return None
        return bool(reply["applied"])


def serve_signals(owned: set[str], listen_address: str | None = None,
                  mem_name: str | None = None,
                  clock: WallClock | None = None) -> PeerServer:
    """Start a peer server owning the given signals; returns the handle."""
    return PeerServer(owned, listen_address=listen_address,
                      mem_name=mem_name, clock=clock)
