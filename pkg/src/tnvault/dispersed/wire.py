"""Length-prefixed wire messages.

Frame layout::

    b"TNW1" | u8 msg_type | u64 LE payload_len | payload

TensorBlob payloads are ``.dt`` bytes; the other types carry UTF-8 JSON.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable

import numpy as np

from ..errors import ProtocolViolation
from ..io import decode_dt, encode_dt

MAGIC = b"TNW1"
HEADER = struct.Struct("<4sBQ")
HEADER_SIZE = HEADER.size  # 13
MAX_PAYLOAD = 1 << 34


class MsgType(IntEnum):
    TENSOR_BLOB = 0
    OP_REQUEST = 1
    OP_DONE = 2
    ERROR = 3


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    payload: bytes

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, int(self.msg_type), len(self.payload)) + self.payload

    @classmethod
    def tensor(cls, arr: np.ndarray) -> "WireMessage":
        return cls(MsgType.TENSOR_BLOB, encode_dt(arr))

    @classmethod
    def request(cls, body: dict) -> "WireMessage":
        return cls(MsgType.OP_REQUEST, _dump(body))

    @classmethod
    def done(cls, body: dict) -> "WireMessage":
        return cls(MsgType.OP_DONE, _dump(body))

    @classmethod
    def error(cls, body: dict) -> "WireMessage":
        return cls(MsgType.ERROR, _dump(body))

    def json(self) -> dict:
        if self.msg_type == MsgType.TENSOR_BLOB:
            raise ProtocolViolation("TensorBlob payload is not JSON")
        try:
            return json.loads(self.payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolViolation(f"bad JSON payload: {exc}") from exc

    def array(self) -> np.ndarray:
        if self.msg_type != MsgType.TENSOR_BLOB:
            raise ProtocolViolation(f"expected TensorBlob, got {self.msg_type.name}")
        return decode_dt(self.payload)


def _dump(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def parse_header(head: bytes) -> tuple[MsgType, int]:
    if len(head) != HEADER_SIZE:
        raise ProtocolViolation(f"short header ({len(head)} bytes)")
    magic, mtype, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolViolation(f"bad magic {magic!r}")
    try:
        mt = MsgType(mtype)
    except ValueError:
        raise ProtocolViolation(f"unknown message type {mtype}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolViolation(f"payload length {length} exceeds limit")
    return mt, length


def decode_message(buf: bytes) -> WireMessage:
    """Decode exactly one complete frame."""
    mt, length = parse_header(buf[:HEADER_SIZE])
    if len(buf) != HEADER_SIZE + length:
        raise ProtocolViolation(f"frame holds {len(buf) - HEADER_SIZE} payload bytes, header says {length}")
    return WireMessage(mt, bytes(buf[HEADER_SIZE:]))


def read_message(recv_exact: Callable[[int], bytes]) -> WireMessage:
    mt, length = parse_header(recv_exact(HEADER_SIZE))
    return WireMessage(mt, recv_exact(length) if length else b"")


def describe(msg: WireMessage) -> dict[str, Any]:
    """Op name / tensor shape of a message, for the protocol log."""
    if msg.msg_type == MsgType.TENSOR_BLOB:
        p = msg.payload
        if len(p) >= 6:
            nd = p[5]
            shape = list(struct.unpack_from(f"<{nd}Q", p, 6)) if len(p) >= 6 + 8 * nd else None
            return {"shape": shape}
        return {"shape": None}
    try:
        body = msg.json()
    except ProtocolViolation:
        return {}
    return {"op": body.get("op")}
