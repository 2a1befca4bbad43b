"""Connection layer shared by the broker and p2p transports.

A :class:`Conn` is one end of a bidirectional frame stream. Two backends:
in-memory pairs (default for tests and desk-scale runs) and TCP sockets
carrying the newline-delimited JSON wire protocol from :mod:`simbus.frames`.

Each end owns an optional ingress :class:`~simbus.netem.LinkShaper`: every
frame received on that end passes through the shaper before dispatch, which
models one shaped one-way network leg.
"""

from __future__ import annotations

import socket
import threading

from .errors import AlreadyShaped, SessionClosed
from .frames import decode_frame, encode_frame


class Conn:
    """One end of a frame stream. Subclasses implement the raw send path."""

    def __init__(self, link_id: str):
        self.link_id = link_id
        self._on_frame = None
        self._on_close = None
        self._ingress = None
        self._pending: list = []
        self._lock = threading.Lock()
        self.closed = False

    # -- receive side ------------------------------------------------------

    def set_on_frame(self, callback) -> None:
        with self._lock:
            self._on_frame = callback
            pending, self._pending = self._pending, []
        for frame in pending:
            callback(frame)

    def set_on_close(self, callback) -> None:
        self._on_close = callback

    def set_ingress_shaper(self, shaper) -> None:
        if self._ingress is not None:
            raise AlreadyShaped(f"link {self.link_id} already shaped")
        self._ingress = shaper

    def _ingest(self, frame: dict) -> None:
        """Raw frame arrival; passes through the ingress shaper."""
        if self.closed:
            return
        if self._ingress is not None:
            self._ingress.deliver(frame, self._dispatch)
        else:
            self._dispatch(frame)

    def _dispatch(self, frame: dict) -> None:
        if self.closed:
            return
        with self._lock:
            if self._on_frame is None:
                self._pending.append(frame)
                return
            callback = self._on_frame
        callback(frame)

    # -- send side (subclass) ----------------------------------------------

    def send(self, frame: dict) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def _fire_close(self) -> None:
        if self._on_close is not None:
            self._on_close()


class MemoryConn(Conn):
    """In-process end; send() feeds the peer end's ingress path directly."""

    def __init__(self, link_id: str):
        super().__init__(link_id)
        self.peer: "MemoryConn | None" = None

    @staticmethod
    def pair(link_id: str) -> tuple["MemoryConn", "MemoryConn"]:
        a = MemoryConn(f"{link_id}:a")
        b = MemoryConn(f"{link_id}:b")
        a.peer, b.peer = b, a
        return a, b

    def send(self, frame: dict) -> None:
        if self.closed or self.peer is None or self.peer.closed:
            raise SessionClosed(f"link {self.link_id} is closed")
        self.peer._ingest(frame)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        self._fire_close()
        if self.peer is not None and not self.peer.closed:
            self.peer.close()


class TcpConn(Conn):
    """Socket-backed end; a reader thread decodes frames off the stream."""

    def __init__(self, sock: socket.socket, link_id: str):
        super().__init__(link_id)
        self._sock = sock
        self._send_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name=f"conn-{link_id}")
        self._reader.start()

    def send(self, frame: dict) -> None:
        if self.closed:
            raise SessionClosed(f"link {self.link_id} is closed")
        data = encode_frame(frame)
        try:
            with self._send_lock:
                self._sock.sendall(data)
        except OSError as exc:
            self.close()
            raise SessionClosed(str(exc)) from exc

    def _read_loop(self) -> None:
        buf = b""
        try:
            while True:
                chunk = self._sock.recv(65536)
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line:
                        self._ingest(decode_frame(line))
        except OSError:
            pass
        finally:
            self.close()

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        self._fire_close()


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    return host or "127.0.0.1", int(port)
