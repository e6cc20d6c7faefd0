"""Bit-exact framing codec for the host/controller serial link.

Frame layout::

    0xAA 0x55 | msg_type u8 | seq u8 | len u8 | payload (len bytes) | crc8

crc8 is polynomial 0x07, init 0x00, MSB-first, computed over
msg_type..payload.  The decoder scans arbitrary byte streams, resynchronizes
after corruption, and never raises on malformed input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

SYNC = b"\xaa\x55"
MAX_PAYLOAD = 32
_HEADER_LEN = 5  # sync(2) + type + seq + len
_CRC_LEN = 1


class MsgType(IntEnum):
    SET_JOINT = 0x01
    PROXIMITY_REPORT = 0x02
    ACK = 0x03
    HEARTBEAT = 0x04


PAYLOAD_SIZES: dict[MsgType, int] = {
    MsgType.SET_JOINT: 4,
    MsgType.PROXIMITY_REPORT: 10,
    MsgType.ACK: 1,
    MsgType.HEARTBEAT: 0,
}


class LinkError(Exception):
    pass


class InvalidType(LinkError):
    pass


class PayloadTooLong(LinkError):
    pass


class PayloadTooShort(LinkError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    seq: int
    payload: bytes = b""


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "checksum" | "length" | "type"
    offset: int  # byte offset of the frame's sync marker within the scanned buffer
    detail: str = ""


@dataclass
class DecodeResult:
    frames: list[Frame] = field(default_factory=list)
    remainder: bytes = b""
    diagnostics: list[Diagnostic] = field(default_factory=list)


def crc8(data: Iterable[int], poly: int = 0x07, init: int = 0x00) -> int:
    crc = init
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def encode(frame: Frame) -> bytes:
    """Serialize a valid frame; rejects unknown types and wrong payload sizes."""
    try:
        expected = PAYLOAD_SIZES[MsgType(frame.msg_type)]
    except ValueError:
        raise InvalidType(f"unknown message type {frame.msg_type!r}") from None
    if not 0 <= frame.seq <= 255:
        raise ValueError(f"seq {frame.seq} outside 0..255")
    if len(frame.payload) > expected:
        raise PayloadTooLong(
            f"{MsgType(frame.msg_type).name} payload {len(frame.payload)} > {expected}"
        )
    if len(frame.payload) < expected:
        raise PayloadTooShort(
            f"{MsgType(frame.msg_type).name} payload {len(frame.payload)} < {expected}"
        )
    body = bytes([frame.msg_type, frame.seq, len(frame.payload)]) + frame.payload
    return SYNC + body + bytes([crc8(body)])


def decode(data: bytes) -> DecodeResult:
    """Extract every verifiable frame from ``data``.

    On a bad length byte or CRC mismatch a diagnostic is recorded and the
    scan resumes just past the failed sync marker, so bytes inside a corrupt
    frame are reconsidered.  An incomplete trailing frame (or a lone 0xAA
    that may begin one) is returned as the remainder.
    """
    result = DecodeResult()
    pos = 0
    while True:
        start = data.find(SYNC, pos)
        if start < 0:
            tail = data[pos:]
            if tail.endswith(SYNC[:1]):
                result.remainder = SYNC[:1]
            return result
        if len(data) < start + _HEADER_LEN:
            result.remainder = data[start:]
            return result
        length = data[start + 4]
        if length > MAX_PAYLOAD:
            result.diagnostics.append(
                Diagnostic("length", start, f"length byte {length} > {MAX_PAYLOAD}")
            )
            pos = start + len(SYNC)
            continue
        end = start + _HEADER_LEN + length + _CRC_LEN
        if len(data) < end:
            result.remainder = data[start:]
            return result
        body = data[start + len(SYNC) : end - _CRC_LEN]
        if crc8(body) != data[end - _CRC_LEN]:
            result.diagnostics.append(Diagnostic("checksum", start, "crc mismatch"))
            pos = start + len(SYNC)
            continue
        msg_type, seq = body[0], body[1]
        payload = bytes(body[3:])
        try:
            mtype = MsgType(msg_type)
        except ValueError:
            result.diagnostics.append(Diagnostic("type", start, f"unknown type 0x{msg_type:02x}"))
            pos = end
            continue
        if len(payload) != PAYLOAD_SIZES[mtype]:
            result.diagnostics.append(
                Diagnostic("length", start, f"{mtype.name} payload {len(payload)} bytes")
            )
            pos = end
            continue
        result.frames.append(Frame(mtype, seq, payload))
        pos = end


class StreamDecoder:
    """Incremental decoder holding the undecodable suffix between feeds."""

    def __init__(self) -> None:
        self._buffer = b""
        self.diagnostics: list[Diagnostic] = []

    def feed(self, chunk: bytes) -> list[Frame]:
        result = decode(self._buffer + chunk)
        self._buffer = result.remainder
        self.diagnostics.extend(result.diagnostics)
        return result.frames

    @property
    def pending(self) -> bytes:
        return self._buffer


# Payload helpers ------------------------------------------------------------

def set_joint_payload(joint_id: int, target_deg: float, speed_flag: int = 0) -> bytes:
    """joint_id u8, target in tenths of a degree u16 LE, speed_flag u8."""
    tenths = round(target_deg * 10.0)
    if not 0 <= tenths <= 0xFFFF:
        raise ValueError(f"target {target_deg} not encodable in u16 tenths")
    return struct.pack("<BHB", joint_id, tenths, speed_flag)


def parse_set_joint(payload: bytes) -> tuple[int, float, int]:
    joint_id, tenths, speed_flag = struct.unpack("<BHB", payload)
    return joint_id, tenths / 10.0, speed_flag


def proximity_payload(distances_mm: Iterable[float]) -> bytes:
    """Five distances, u16 LE millimeters each."""
    values = [round(d) for d in distances_mm]
    if len(values) != 5:
        raise ValueError("proximity report carries exactly five distances")
    return struct.pack("<5H", *values)


def parse_proximity(payload: bytes) -> tuple[int, ...]:
    return struct.unpack("<5H", payload)


def ack_payload(acked_seq: int) -> bytes:
    return bytes([acked_seq & 0xFF])


def parse_ack(payload: bytes) -> int:
    return payload[0]
