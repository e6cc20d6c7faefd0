import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devi.link import (
    PAYLOAD_SIZES,
    Frame,
    InvalidType,
    MsgType,
    PayloadTooLong,
    PayloadTooShort,
    StreamDecoder,
    ack_payload,
    decode,
    encode,
    parse_proximity,
    parse_set_joint,
    proximity_payload,
    set_joint_payload,
)


def crc8_oracle(data: bytes) -> int:
    """Independent CRC-8/0x07 via polynomial long division over the bit string."""
    bits = []
    for byte in data:
        bits.extend((byte >> i) & 1 for i in range(7, -1, -1))
    bits.extend([0] * 8)  # append the degree-8 zero block
    poly = [1, 0, 0, 0, 0, 0, 1, 1, 1]  # x^8 + x^2 + x + 1
    for i in range(len(bits) - 8):
        if bits[i]:
            for j, p in enumerate(poly):
                bits[i + j] ^= p
    value = 0
    for bit in bits[-8:]:
        value = (value << 1) | bit
    return value


def frames_strategy():
    def build(draw):
        msg_type = draw(st.sampled_from(list(MsgType)))
        seq = draw(st.integers(min_value=0, max_value=255))
        payload = draw(st.binary(min_size=PAYLOAD_SIZES[msg_type],
                                 max_size=PAYLOAD_SIZES[msg_type]))
        return Frame(msg_type, seq, payload)

    return st.composite(build)()


class TestCrc:
    def test_against_long_division_oracle(self):
        rng = np.random.default_rng(3)
        from devi.link import crc8

        for _ in range(200):
            data = bytes(rng.integers(0, 256, size=int(rng.integers(0, 20))).tolist())
            assert crc8(data) == crc8_oracle(data)

    def test_known_vector(self):
        # "123456789" check value for CRC-8/0x07 is 0xF4
        from devi.link import crc8

        assert crc8(b"123456789") == 0xF4


class TestEncode:
    def test_heartbeat_bytes(self):
        # oracle: crc over [04, 00, 00] = 0xAB
        assert crc8_oracle(bytes([0x04, 0x00, 0x00])) == 0xAB
        assert encode(Frame(MsgType.HEARTBEAT, 0)) == bytes.fromhex("aa55040000ab")

    def test_payload_too_long(self):
        with pytest.raises(PayloadTooLong):
            encode(Frame(MsgType.SET_JOINT, 1, b"\x00" * 5))

    def test_payload_too_short(self):
        with pytest.raises(PayloadTooShort):
            encode(Frame(MsgType.SET_JOINT, 1, b"\x00" * 3))

    def test_invalid_type(self):
        with pytest.raises(InvalidType):
            encode(Frame(0x7F, 1, b""))

    def test_seq_bounds(self):
        with pytest.raises(ValueError):
            encode(Frame(MsgType.HEARTBEAT, 256))


class TestDecode:
    def test_two_concatenated_frames(self):
        data = encode(Frame(MsgType.HEARTBEAT, 1)) + encode(
            Frame(MsgType.ACK, 2, ack_payload(1))
        )
        result = decode(data)
        assert [f.msg_type for f in result.frames] == [MsgType.HEARTBEAT, MsgType.ACK]
        assert result.remainder == b""
        assert result.diagnostics == []

    def test_flipped_byte_yields_checksum_error(self):
        data = bytearray(encode(Frame(MsgType.HEARTBEAT, 7)))
        data[-1] ^= 0xFF
        result = decode(bytes(data))
        assert result.frames == []
        assert [d.kind for d in result.diagnostics] == ["checksum"]

    def test_resynchronizes_after_garbage(self):
        data = b"\x01\x02\xaa\x03" + encode(Frame(MsgType.HEARTBEAT, 9))
        result = decode(data)
        assert len(result.frames) == 1
        assert result.frames[0].seq == 9

    def test_partial_frame_returned_as_remainder(self):
        data = encode(Frame(MsgType.PROXIMITY_REPORT, 3, proximity_payload([1] * 5)))
        result = decode(data[:-4])
        assert result.frames == []
        assert result.remainder == data[:-4]

    def test_lone_trailing_sync_byte_kept(self):
        result = decode(b"\x00\x11\xaa")
        assert result.remainder == b"\xaa"

    @settings(max_examples=200)
    @given(frames_strategy())
    def test_round_trip_identity(self, frame):
        result = decode(encode(frame))
        assert result.frames == [frame]
        assert result.remainder == b""

    @settings(max_examples=100)
    @given(st.binary(max_size=512))
    def test_never_raises_on_garbage(self, data):
        result = decode(data)
        for frame in result.frames:
            assert len(frame.payload) == PAYLOAD_SIZES[frame.msg_type]

    @settings(max_examples=60)
    @given(st.lists(frames_strategy(), max_size=6), st.data())
    def test_chunk_split_invariance(self, frames, data):
        stream = b"".join(encode(f) for f in frames)
        whole = decode(stream)
        cut = data.draw(st.integers(min_value=0, max_value=len(stream)))
        decoder = StreamDecoder()
        got = decoder.feed(stream[:cut]) + decoder.feed(stream[cut:])
        assert got == whole.frames
        assert decoder.pending == whole.remainder


class TestStreamDecoder:
    def test_byte_at_a_time(self):
        frames = [
            Frame(MsgType.SET_JOINT, 5, set_joint_payload(0, 130.0)),
            Frame(MsgType.HEARTBEAT, 6),
        ]
        stream = b"".join(encode(f) for f in frames)
        decoder = StreamDecoder()
        got = []
        for i in range(len(stream)):
            got.extend(decoder.feed(stream[i : i + 1]))
        assert got == frames
        assert decoder.pending == b""


class TestPayloadHelpers:
    def test_set_joint_round_trip(self):
        payload = set_joint_payload(3, 123.4, speed_flag=1)
        assert len(payload) == PAYLOAD_SIZES[MsgType.SET_JOINT]
        assert parse_set_joint(payload) == (3, 123.4, 1)

    def test_set_joint_tenths_resolution(self):
        assert parse_set_joint(set_joint_payload(0, 85.04))[1] == 85.0

    def test_proximity_round_trip(self):
        payload = proximity_payload([0, 250.4, 1100, 1999.6, 2000])
        assert parse_proximity(payload) == (0, 250, 1100, 2000, 2000)

    def test_proximity_requires_five(self):
        with pytest.raises(ValueError):
            proximity_payload([1, 2, 3])
