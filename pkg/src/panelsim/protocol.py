"""Framed binary wire protocol shared by the server and all clients.

Frame layout (normative, bit-for-bit across implementations):

    byte 0      magic: 0xEB request, 0xEC response
    byte 1      opcode (request) or status (response)
    bytes 2-3   payload length, u16 little-endian, <= 4096
    bytes 4..   payload
    last byte   CRC-8 (poly 0x07, init 0x00, no reflection) over all
                preceding bytes

Multi-byte payload integers are little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC_REQUEST = 0xEB
MAGIC_RESPONSE = 0xEC
MAX_PAYLOAD = 4096
HEADER_LEN = 4          # magic + code + length
OVERHEAD = 5            # header + crc

# opcodes
SET_DOUT = 0x01
GET_DIN = 0x02
SET_DAC = 0x03
GET_ADC = 0x04
CAPTURE = 0x05
SET_PWG = 0x06
GET_CNTR = 0x07
GET_CMP = 0x08
GET_STATUS = 0x09
CLEAR_FAULT = 0x0A
LOAD_PATCH = 0x0B
GET_VERSION = 0x0C

OPCODE_NAMES = {
    SET_DOUT: "SET_DOUT", GET_DIN: "GET_DIN", SET_DAC: "SET_DAC",
    GET_ADC: "GET_ADC", CAPTURE: "CAPTURE", SET_PWG: "SET_PWG",
    GET_CNTR: "GET_CNTR", GET_CMP: "GET_CMP", GET_STATUS: "GET_STATUS",
    CLEAR_FAULT: "CLEAR_FAULT", LOAD_PATCH: "LOAD_PATCH",
    GET_VERSION: "GET_VERSION",
}

# response status codes
ST_OK = 0x00
ST_BAD_OPCODE = 0x01
ST_BAD_ARG = 0x02
ST_FAULT_ACTIVE = 0x03
ST_CRC_ERROR = 0x04
ST_LIMIT = 0x05
ST_LINT_ERROR = 0x06

STATUS_NAMES = {
    ST_OK: "OK", ST_BAD_OPCODE: "BAD_OPCODE", ST_BAD_ARG: "BAD_ARG",
    ST_FAULT_ACTIVE: "FAULT_ACTIVE", ST_CRC_ERROR: "CRC_ERROR",
    ST_LIMIT: "LIMIT", ST_LINT_ERROR: "LINT_ERROR",
}


def _make_crc8_table(poly: int = 0x07) -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly if crc & 0x80 else crc << 1) & 0xFF
        table.append(crc)
    return table


_CRC8_TABLE = _make_crc8_table()


def crc8(data: bytes) -> int:
    crc = 0x00
    for b in data:
        crc = _CRC8_TABLE[crc ^ b]
    return crc


class ProtocolError(Exception):
    pass


class PayloadTooLarge(ProtocolError):
    pass


class BadMagic(ProtocolError):
    pass


class BadCrc(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    """Buffer longer than the frame it declares."""


@dataclass(frozen=True)
class Frame:
    magic: int
    code: int          # opcode for requests, status for responses
    payload: bytes = b""

    @classmethod
    def request(cls, opcode: int, payload: bytes = b"") -> "Frame":
        return cls(MAGIC_REQUEST, opcode, payload)

    @classmethod
    def response(cls, status: int, payload: bytes = b"") -> "Frame":
        return cls(MAGIC_RESPONSE, status, payload)


def encode(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(frame.payload)} bytes")
    head = struct.pack("<BBH", frame.magic, frame.code, len(frame.payload))
    body = head + frame.payload
    return body + bytes([crc8(body)])


def decode(data: bytes) -> Frame:
    """Decode exactly one frame; any deviation raises a typed error."""
    if len(data) < OVERHEAD:
        raise Truncated(f"{len(data)} bytes, need at least {OVERHEAD}")
    magic, code, plen = struct.unpack("<BBH", data[:HEADER_LEN])
    if magic not in (MAGIC_REQUEST, MAGIC_RESPONSE):
        raise BadMagic(f"0x{magic:02X}")
    if plen > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{plen} bytes declared")
    total = OVERHEAD + plen
    if len(data) < total:
        raise Truncated(f"{len(data)} bytes, frame declares {total}")
    if len(data) > total:
        raise LengthMismatch(f"{len(data)} bytes, frame declares {total}")
    if crc8(data[:total - 1]) != data[total - 1]:
        raise BadCrc("checksum mismatch")
    return Frame(magic, code, bytes(data[HEADER_LEN:total - 1]))


class StreamDecoder:
    """Incremental decoder over a byte stream.

    Feed arbitrary chunks; yields ("frame", Frame) and ("error", exc)
    events. After a bad CRC or bad magic it resynchronizes by scanning
    forward for the next plausible magic byte.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[str, object]]:
        self._buf.extend(data)
        events: list[tuple[str, object]] = []
        while True:
            start = self._find_magic()
            if start is None:
                self._buf.clear()
                break
            if start:
                del self._buf[:start]
            if len(self._buf) < HEADER_LEN:
                break
            plen = int.from_bytes(self._buf[2:4], "little")
            if plen > MAX_PAYLOAD:
                events.append(("error", PayloadTooLarge(f"{plen} bytes declared")))
                del self._buf[:1]
                continue
            total = OVERHEAD + plen
            if len(self._buf) < total:
                break
            chunk = bytes(self._buf[:total])
            if crc8(chunk[:-1]) != chunk[-1]:
                events.append(("error", BadCrc("checksum mismatch")))
                del self._buf[:1]
                continue
            del self._buf[:total]
            events.append(("frame", Frame(chunk[0], chunk[1], chunk[4:-1])))
        return events

    def _find_magic(self):
        for i, b in enumerate(self._buf):
            if b in (MAGIC_REQUEST, MAGIC_RESPONSE):
                return i
        return None


# payload packing helpers

def pack_u16(v: int) -> bytes:
    return struct.pack("<H", v)


def pack_u32(v: int) -> bytes:
    return struct.pack("<I", v)


def unpack_u16(b: bytes, off: int = 0) -> int:
    return struct.unpack_from("<H", b, off)[0]


def unpack_u32(b: bytes, off: int = 0) -> int:
    return struct.unpack_from("<I", b, off)[0]
