"""Wire protocol framing: newline-delimited UTF-8 JSON, one frame per line.

Key order within each frame is fixed so that encodings are byte-stable
across implementations (the golden-file suite pins the exact bytes).
Floats are encoded with Python repr semantics (shortest round-trip,
integral values carry a trailing ``.0``).
"""

from __future__ import annotations

import json

# Canonical key order per frame kind. "op" always comes first.
FRAME_KEYS = {
    "sub": ("topic",),
    "pub": ("topic", "value", "ts", "seq"),
    "msg": ("topic", "value", "ts", "seq"),
    "ack": ("ts",),
    "get": ("topic",),
    "set": ("topic", "value", "ts", "seq"),
    "val": ("topic", "value", "ts", "seq"),
    "setack": ("topic", "applied"),
    "welcome": ("client",),
    "err": ("code", "detail"),
}


def encode_frame(frame: dict) -> bytes:
    op = frame["op"]
    keys = FRAME_KEYS.get(op)
    if keys is None:
        raise ValueError(f"unknown frame op {op!r}")
    ordered = {"op": op}
    for key in keys:
        if key in frame:
            ordered[key] = frame[key]
    return json.dumps(ordered, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_frame(line: bytes) -> dict:
    frame = json.loads(line.decode("utf-8"))
    if not isinstance(frame, dict) or "op" not in frame:
        raise ValueError("malformed frame")
    return frame


def sub_frame(topic: str) -> dict:
    return {"op": "sub", "topic": topic}


def pub_frame(topic: str, value: float, ts: int, seq: int) -> dict:
    return {"op": "pub", "topic": topic, "value": float(value), "ts": ts, "seq": seq}


def msg_frame(topic: str, value: float, ts: int, seq: int) -> dict:
    return {"op": "msg", "topic": topic, "value": float(value), "ts": ts, "seq": seq}


def ack_frame(ts: int) -> dict:
    return {"op": "ack", "ts": ts}


def get_frame(topic: str) -> dict:
    return {"op": "get", "topic": topic}


def set_frame(topic: str, value: float, ts: int, seq: int) -> dict:
    return {"op": "set", "topic": topic, "value": float(value), "ts": ts, "seq": seq}


def val_frame(topic: str, value: float, ts: int, seq: int) -> dict:
    return {"op": "val", "topic": topic, "value": float(value), "ts": ts, "seq": seq}


def setack_frame(topic: str, applied: bool) -> dict:
    return {"op": "setack", "topic": topic, "applied": applied}


def welcome_frame(client: str) -> dict:
    return {"op": "welcome", "client": client}


def err_frame(code: str, detail: str = "") -> dict:
    return {"op": "err", "code": code, "detail": detail}
