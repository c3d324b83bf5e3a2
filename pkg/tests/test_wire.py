import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnvault.dispersed.wire import (
    HEADER_SIZE,
    MAGIC,
    MsgType,
    WireMessage,
    decode_message,
    describe,
    parse_header,
    read_message,
)
from tnvault.errors import ProtocolViolation
from tnvault.io import encode_dt


def test_frame_layout_bytes():
    msg = WireMessage(MsgType.OP_DONE, b"{}")
    raw = msg.encode()
    assert raw == b"TNW1" + bytes([2]) + struct.pack("<Q", 2) + b"{}"
    assert HEADER_SIZE == 13


def test_tensor_blob_payload_is_dt():
    a = np.arange(6.0).reshape(2, 3, order="F")
    msg = WireMessage.tensor(a)
    assert msg.payload == encode_dt(a)
    assert np.array_equal(decode_message(msg.encode()).array(), a)
    assert describe(msg) == {"shape": [2, 3]}


@given(st.sampled_from(list(MsgType)), st.binary(max_size=300))
def test_round_trip(mt, payload):
    raw = WireMessage(mt, payload).encode()
    back = decode_message(raw)
    assert back.msg_type == mt and back.payload == payload
    pos = [0]

    def recv(n):
        out = raw[pos[0]:pos[0] + n]
        pos[0] += n
        return out

    assert read_message(recv) == back


def test_bad_magic():
    raw = bytearray(WireMessage.request({"op": "ping"}).encode())
    raw[:4] = b"XXXX"
    with pytest.raises(ProtocolViolation):
        decode_message(bytes(raw))


def test_unknown_type():
    with pytest.raises(ProtocolViolation):
        parse_header(MAGIC + bytes([9]) + struct.pack("<Q", 0))


def test_length_mismatch():
    raw = WireMessage.request({"op": "ping"}).encode()
    with pytest.raises(ProtocolViolation):
        decode_message(raw[:-1])
    with pytest.raises(ProtocolViolation):
        parse_header(raw[:5])


def test_json_accessors():
    m = WireMessage.request({"op": "ping", "b": 1})
    assert m.json() == {"op": "ping", "b": 1}
    assert m.payload == b'{"b":1,"op":"ping"}'
    with pytest.raises(ProtocolViolation):
        m.array()
    with pytest.raises(ProtocolViolation):
        WireMessage.tensor(np.ones(2)).json()
    with pytest.raises(ProtocolViolation):
        WireMessage(MsgType.OP_DONE, b"\xff").json()
