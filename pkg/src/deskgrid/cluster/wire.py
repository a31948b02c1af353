"""Wire protocol: length-prefixed canonical-JSON messages over a stream socket.

Every frame is a 4-byte big-endian length followed by one JSON document with
sorted keys, so encodings are byte-stable and golden files can pin them. Each
request variant has exactly one reply variant; correlation ids round-trip
unchanged and drive idempotent retries.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field

from ..errors import RequestTimeout

PROTO_VERSION = 1
MAX_FRAME = 4 << 20

REQUEST_REPLY = {
    "Register": "Ack",
    "Heartbeat": "Ack",
    "Allocate": "Allocated",
    "Step": "StepResult",
    "Reset": "Ack",
    "Release": "Ack",
    "StatusQuery": "StatusReport",
}
VARIANTS = tuple(sorted(set(REQUEST_REPLY) | set(REQUEST_REPLY.values()) | {"Err"}))


@dataclass(frozen=True)
class WireMessage:
    variant: str
    correlation_id: str
    sender_id: str
    payload: dict = field(default_factory=dict)
    proto_version: int = PROTO_VERSION

    def reply(self, variant: str, sender_id: str, payload: dict | None = None
              ) -> "WireMessage":
        return WireMessage(variant=variant, correlation_id=self.correlation_id,
                           sender_id=sender_id, payload=payload or {})

    def error(self, sender_id: str, code: str, detail: str = "") -> "WireMessage":
        return self.reply("Err", sender_id, {"code": code, "detail": detail})


def encode(msg: WireMessage) -> bytes:
    if msg.variant not in VARIANTS:
        raise ValueError(f"unknown variant {msg.variant!r}")
    body = json.dumps({
        "proto_version": msg.proto_version,
        "variant": msg.variant,
        "correlation_id": msg.correlation_id,
        "sender_id": msg.sender_id,
        "payload": msg.payload,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def decode_body(body: bytes) -> WireMessage:
    doc = json.loads(body.decode("utf-8"))
    if doc.get("proto_version") != PROTO_VERSION:
        raise ValueError(f"unsupported proto_version {doc.get('proto_version')!r}")
    if doc.get("variant") not in VARIANTS:
        raise ValueError(f"unknown variant {doc.get('variant')!r}")
    return WireMessage(variant=doc["variant"],
                       correlation_id=doc["correlation_id"],
                       sender_id=doc["sender_id"],
                       payload=doc.get("payload", {}))


def read_message(sock: socket.socket) -> WireMessage | None:
    """Read one frame; None on clean EOF."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds limit")
    body = _read_exact(sock, length)
    if body is None:
        raise ConnectionError("truncated frame")
    return decode_body(body)


def write_message(sock: socket.socket, msg: WireMessage) -> None:
    sock.sendall(encode(msg))


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = sock.recv(remaining)
        except socket.timeout as exc:
            raise RequestTimeout(str(exc)) from exc
        if not chunk:
            if chunks:
                raise ConnectionError("truncated frame")
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
