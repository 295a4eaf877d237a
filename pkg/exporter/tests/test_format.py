import struct

import numpy as np
import pytest

from fembexport.format import Bank, FormatError, header_bytes, read_bank, write_bank


def _bank():
    return Bank(
        class_names=["mel", "nev"],
        text_features=np.array([[1.0, 0.0, -0.5, 0.25], [0.0, 2.0, 1.5, -1.0]], np.float32),
        features=np.array(
            [[0.5, -1.25, 2.0, 0.0], [1.0, 1.0, -2.0, 0.125], [-0.5, 0.75, 3.0, 4.0]],
            np.float32,
        ),
        labels=np.array([0, 1, 0]),
    )


class TestRoundTrip:
    def test_write_read_is_exact(self, tmp_path):
        path = tmp_path / "bank.femb"
        write_bank(_bank(), path)
        loaded = read_bank(path)
        assert loaded.class_names == ["mel", "nev"]
        np.testing.assert_array_equal(loaded.text_features, _bank().text_features)
        np.testing.assert_array_equal(loaded.features, _bank().features)
        np.testing.assert_array_equal(loaded.labels, _bank().labels)

    def test_header_layout_field_by_field(self, tmp_path):
        path = tmp_path / "bank.femb"
        write_bank(_bank(), path)
        data = path.read_bytes()
        assert data[:4] == b"FEMB"
        version, dim, n_classes, n_samples = struct.unpack(">HIII", data[4:18])
        assert (version, dim, n_classes, n_samples) == (1, 4, 2, 3)
        assert data[: len(header_bytes(4, 2, 3, ["mel", "nev"]))] == header_bytes(
            4, 2, 3, ["mel", "nev"]
        )

    def test_total_size_matches_layout(self, tmp_path):
        path = tmp_path / "bank.femb"
        write_bank(_bank(), path)
        expected = (
            4 + 14 + sum(2 + len(n) for n in ("mel", "nev"))
            + 2 * 4 * 4 + 3 * (2 + 4 * 4)
        )
        assert path.stat().st_size == expected


class TestErrors:
    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "bank.femb"
        write_bank(_bank(), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(FormatError, match="truncated"):
            read_bank(path)

    def test_corrupted_magic_detected(self, tmp_path):
        path = tmp_path / "bank.femb"
        write_bank(_bank(), path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_bank(path)

    def test_label_out_of_range_rejected_on_write(self, tmp_path):
        bank = _bank()
        bank.labels = np.array([0, 5, 0])
        with pytest.raises(FormatError, match="range"):
            write_bank(bank, tmp_path / "bad.femb")
