import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfed.errors import (
    BadMagicError,
    MalformedPacketError,
    SerializationError,
    TruncatedPayloadError,
    UnknownDtypeError,
)
from maskfed.numerics import stream
from maskfed.verify import half_bits_to_float, quantize_half, quantize_half_bits
from maskfed.wire_codec import (
    WirePacket,
    decode_payload,
    encode_payload,
    float32_baseline,
    pack,
    unpack,
)

# Uncompressed payload of {"t": [[0.5, -1.25], [2.0, 1.0]]}, spelled out from
# the format definition: magic, version 1, count 1, name "t", dtype 1, ndim 2,
# dims 2x2, then the four big-endian half values.
GOLDEN_PAYLOAD_HEX = (
    "464d4331" "0001" "00000001" "0001" "74" "01" "02" "00000002" "00000002"
    "3800" "bd00" "4000" "3c00"
)


class TestRoundTrip:
    def test_empty_tensor_list(self):
        out = unpack(pack({}))
        assert out == {}

    def test_all_zero_tensor_compresses_well(self):
        tensors = {"z": np.zeros((10, 10))}
        packet = pack(tensors)
        out = unpack(packet)
        np.testing.assert_array_equal(out["z"], np.zeros((10, 10), dtype=np.float32))
        assert len(packet.data) < 0.25 * float32_baseline(tensors)

    def test_adapter_sized_packet_beats_float32_by_almost_half(self):
        rng = stream(0, "wire-size")
        tensors = {
            "layer1.weight": rng.standard_normal((512, 512)) * 0.05,
            "layer1.bias": rng.standard_normal(512) * 0.05,
            "layer1.threshold": np.zeros(512),
            "layer2.weight": rng.standard_normal((512, 512)) * 0.05,
            "layer2.bias": rng.standard_normal(512) * 0.05,
            "layer2.threshold": np.zeros(512),
        }
        packet = pack(tensors)
        assert len(packet.data) <= 0.55 * float32_baseline(tensors)

    def test_exactly_representable_values_survive_bitwise(self):
        values = np.array([0.5, -1.25, 2.0, 0.0, -0.0, 65504.0, 6.103515625e-05])
        out = unpack(pack({"v": values}))["v"]
        np.testing.assert_array_equal(out, values.astype(np.float32))

    def test_names_order_shapes_preserved(self, rng):
        tensors = {
            "b.second": rng.standard_normal(3),
            "a.first": rng.standard_normal((2, 2)),
            "scalarish": rng.standard_normal((1,)),
        }
        out = unpack(pack(tensors))
        assert list(out) == ["b.second", "a.first", "scalarish"]
        assert [out[k].shape for k in out] == [(3,), (2, 2), (1,)]

    @given(st.integers(min_value=0, max_value=10**6))
    @settings(max_examples=30, deadline=None)
    def test_quantization_error_bound(self, seed):
        r = stream(seed, "wire-prop")
        x = r.uniform(-60000, 60000, size=64)
        out = unpack(pack({"x": x}))["x"].astype(np.float64)
        rel = np.abs(out - x) / np.abs(x)
        assert np.max(rel) <= 2.0**-11

    def test_idempotent_repack(self, rng):
        tensors = {"w": rng.standard_normal((30, 7))}
        first = pack(tensors)
        second = pack(unpack(first))
        assert first.data == second.data
        assert first.raw_len == second.raw_len


class TestQuantizerOracle:
    def test_matches_bit_level_oracle_on_mixed_ranges(self):
        r = stream(0, "wire-oracle")
        values = np.concatenate(
            [
                r.uniform(-70000, 70000, size=500),
                r.uniform(-2, 2, size=500),
                r.uniform(-6e-5, 6e-5, size=500),  # subnormal half range
                np.array([65504.0, -65504.0, 65519.9, 65520.0, 1e-8, -1e-8]),
            ]
        )
        decoded = unpack(pack({"v": values}))["v"].astype(np.float64)
        for x, got in zip(values, decoded):
            want = quantize_half(min(max(x, -65504.0), 65504.0))
            assert got == want

    def test_subnormal_absolute_bound(self):
        r = stream(1, "wire-subnormal")
        x = r.uniform(-6e-5, 6e-5, size=512)
        out = unpack(pack({"x": x}))["x"].astype(np.float64)
        assert np.max(np.abs(out - x)) <= 2.0**-25

    def test_oracle_decodes_known_patterns(self):
        assert half_bits_to_float(0x3800) == 0.5
        assert half_bits_to_float(0xBD00) == -1.25
        assert half_bits_to_float(0x7BFF) == 65504.0
        assert half_bits_to_float(0x0001) == 2.0**-24
        assert quantize_half_bits(0.5) == 0x3800
        assert quantize_half_bits(-1.25) == 0xBD00
        assert quantize_half_bits(1e9) == 0x7BFF  # saturates


class TestSaturationAndErrors:
    def test_out_of_range_values_saturate(self):
        out = unpack(pack({"v": np.array([1e6, -1e6])}))["v"]
        np.testing.assert_array_equal(out, np.array([65504.0, -65504.0], np.float32))

    def test_non_finite_rejected_naming_tensor(self):
        with pytest.raises(SerializationError, match="bad.tensor"):
            pack({"ok": np.ones(2), "bad.tensor": np.array([np.nan])})

    def test_corrupted_magic_fails_closed(self):
        payload = bytearray(bytes.fromhex(GOLDEN_PAYLOAD_HEX))
        payload[0] ^= 0xFF
        with pytest.raises(BadMagicError):
            decode_payload(bytes(payload))

    def test_garbage_bytes_fail_at_framing(self):
        with pytest.raises(BadMagicError, match="bad magic"):
            unpack(b"this is not a packet")

    def test_truncated_payload(self):
        payload = bytes.fromhex(GOLDEN_PAYLOAD_HEX)[:-3]
        with pytest.raises(TruncatedPayloadError):
            decode_payload(payload)

    def test_unknown_dtype_code(self):
        payload = bytearray(bytes.fromhex(GOLDEN_PAYLOAD_HEX))
        payload[13] = 9  # dtype byte of the first tensor
        with pytest.raises(UnknownDtypeError):
            decode_payload(bytes(payload))

    def test_trailing_bytes_rejected(self):
        payload = bytes.fromhex(GOLDEN_PAYLOAD_HEX) + b"\x00"
        with pytest.raises(MalformedPacketError):
            decode_payload(payload)

    def test_wrong_version_rejected(self):
        payload = bytearray(bytes.fromhex(GOLDEN_PAYLOAD_HEX))
        payload[5] = 2
        with pytest.raises(MalformedPacketError):
            decode_payload(bytes(payload))


class TestGoldenBytes:
    def test_payload_matches_golden_fixture(self):
        payload = encode_payload({"t": np.array([[0.5, -1.25], [2.0, 1.0]])})
        assert payload == bytes.fromhex(GOLDEN_PAYLOAD_HEX)

    def test_packet_is_deflate_of_payload(self):
        packet = pack({"t": np.array([[0.5, -1.25], [2.0, 1.0]])})
        assert zlib.decompress(packet.data) == bytes.fromhex(GOLDEN_PAYLOAD_HEX)
        assert packet.raw_len == len(bytes.fromhex(GOLDEN_PAYLOAD_HEX))

    def test_unpack_accepts_raw_bytes_and_packets(self):
        packet = pack({"t": np.array([[0.5, -1.25], [2.0, 1.0]])})
        a = unpack(packet)
        b = unpack(packet.data)
        assert list(a) == list(b) == ["t"]
        np.testing.assert_array_equal(a["t"], b["t"])
        assert isinstance(packet, WirePacket)
