import random

import pytest
from hypothesis import given, settings, strategies as st

from panelsim import protocol
from panelsim.protocol import (
    BadCrc,
    BadMagic,
    Frame,
    LengthMismatch,
    PayloadTooLarge,
    ProtocolError,
    StreamDecoder,
    Truncated,
    crc8,
    decode,
    encode,
)

from conftest import CRC_FRAMES


def crc8_bitwise(data: bytes) -> int:
    """Independent reference: shift-register CRC-8, poly 0x07, init 0."""
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07 if crc & 0x80 else crc << 1) & 0xFF
    return crc


class TestCrc8:
    def test_check_value(self):
        # standard check value for CRC-8/SMBUS-style poly 0x07, init 0
        assert crc8(b"123456789") == 0xF4

    @given(st.binary(max_size=64))
    def test_matches_bitwise_reference(self, data):
        assert crc8(data) == crc8_bitwise(data)


frames = st.builds(
    Frame,
    magic=st.sampled_from([protocol.MAGIC_REQUEST, protocol.MAGIC_RESPONSE]),
    code=st.integers(0, 255),
    payload=st.binary(max_size=200),
)


class TestEncode:
    def test_set_dac_layout(self):
        data = encode(Frame.request(protocol.SET_DAC, bytes([128])))
        assert data[:5] == bytes([0xEB, 0x03, 0x01, 0x00, 0x80])
        assert data[5] == crc8_bitwise(data[:5])

    def test_get_cmp_layout(self):
        data = encode(Frame.request(protocol.GET_CMP))
        assert data[:4] == bytes([0xEB, 0x08, 0x00, 0x00])
        assert data[4] == crc8_bitwise(data[:4])

    def test_payload_too_large(self):
        with pytest.raises(PayloadTooLarge):
            encode(Frame.request(0x01, bytes(5000)))

    def test_total_length(self):
        f = Frame.request(0x04, bytes(17))
        assert len(encode(f)) == 5 + 17


class TestDecode:
    @given(frames)
    def test_roundtrip(self, frame):
        assert decode(encode(frame)) == frame

    def test_empty_input(self):
        with pytest.raises(Truncated):
            decode(b"")

    def test_bad_magic(self):
        data = bytearray(encode(Frame.request(protocol.GET_CMP)))
        data[0] = 0x55
        with pytest.raises(BadMagic):
            decode(bytes(data))

    def test_declared_payload_too_large(self):
        data = bytes([0xEB, 0x01, 0xFF, 0xFF]) + bytes(10)
        with pytest.raises(PayloadTooLarge):
            decode(data)

    @given(frames, st.integers(min_value=0))
    def test_single_bit_corruption_detected(self, frame, bitpos):
        data = bytearray(encode(frame))
        bitpos %= len(data) * 8
        data[bitpos // 8] ^= 1 << (bitpos % 8)
        with pytest.raises(ProtocolError):
            decode(bytes(data))

    @settings(max_examples=500)
    @given(st.binary(max_size=300))
    def test_total_on_arbitrary_bytes(self, data):
        try:
            decode(data)
        except ProtocolError:
            pass

    def test_trailing_bytes_rejected(self):
        data = encode(Frame.request(protocol.GET_CMP)) + b"\x00"
        with pytest.raises(LengthMismatch):
            decode(data)


class TestFixtureCorpus:
    def test_all_fixture_frames_decode(self):
        lines = CRC_FRAMES.read_text().split()
        assert len(lines) == 20
        for line in lines:
            data = bytes.fromhex(line)
            frame = decode(data)
            assert encode(frame) == data
            assert data[-1] == crc8_bitwise(data[:-1])

    def test_exhaustive_single_bit_corruption_over_corpus(self):
        for line in CRC_FRAMES.read_text().split():
            data = bytes.fromhex(line)
            for bitpos in range(len(data) * 8):
                bad = bytearray(data)
                bad[bitpos // 8] ^= 1 << (bitpos % 8)
                with pytest.raises(ProtocolError):
                    decode(bytes(bad))


class TestStreamDecoder:
    def test_frames_across_chunk_boundaries(self):
        f1 = Frame.request(protocol.SET_DAC, bytes([7]))
        f2 = Frame.request(protocol.GET_ADC, bytes([2]))
        stream = encode(f1) + encode(f2)
        d = StreamDecoder()
        events = []
        for i in range(0, len(stream), 3):
            events += d.feed(stream[i:i + 3])
        assert events == [("frame", f1), ("frame", f2)]

    def test_resync_after_garbage(self):
        f = Frame.request(protocol.GET_CMP)
        d = StreamDecoder()
        events = d.feed(b"\x00\x12\x34" + encode(f))
        assert ("frame", f) in events

    def test_bad_crc_reported_then_resync(self):
        good = Frame.request(protocol.GET_STATUS)
        bad = bytearray(encode(Frame.request(protocol.GET_CMP)))
        bad[-1] ^= 0xFF
        d = StreamDecoder()
        events = d.feed(bytes(bad) + encode(good))
        kinds = [k for k, _ in events]
        assert "error" in kinds
        assert events[-1] == ("frame", good)

    def test_fuzz_never_crashes(self):
        rng = random.Random(99)
        d = StreamDecoder()
        for _ in range(2000):
            blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 60)))
            for kind, item in d.feed(blob):
                assert kind in ("frame", "error")

    def test_bounded_memory(self):
        d = StreamDecoder()
        d.feed(b"\x00" * 100_000)  # no magic anywhere: buffer must drain
        assert len(d._buf) == 0
