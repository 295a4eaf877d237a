import json
import struct

import numpy as np
import pytest
from PIL import Image

from fembexport.cli import main as cli_main
from fembexport.encoders import HashProjectionEncoder, get_encoder
from fembexport.export import (
    ExportError,
    ExportManifest,
    ManifestError,
    export,
    load_manifest,
    selftest,
)
from fembexport.format import read_bank


def _make_image(path, shade: int, size=(20, 14)):
    pixels = np.zeros((size[1], size[0], 3), dtype=np.uint8)
    pixels[:, :, 0] = shade
    pixels[::3, ::2, 1] = 255 - shade
    Image.fromarray(pixels).save(path)


@pytest.fixture
def image_root(tmp_path):
    root = tmp_path / "images"
    for class_name, shades in (("melanoma", (10, 90, 170)), ("nevus", (40, 130, 220))):
        (root / class_name).mkdir(parents=True)
        for i, shade in enumerate(shades):
            _make_image(root / class_name / f"img_{i}.png", shade)
    return root


def _manifest(image_root, tmp_path, **overrides) -> ExportManifest:
    kwargs = dict(
        image_root=str(image_root),
        classes=["melanoma", "nevus"],
        output=str(tmp_path / "out.femb"),
        backbone="test-hash-16",
    )
    kwargs.update(overrides)
    return ExportManifest(**kwargs)


class TestExport:
    def test_two_class_six_image_fixture_round_trips_into_the_simulator(
        self, image_root, tmp_path
    ):
        """Acceptance criterion 10: the exported file parses in the primary
        package with the right dimensions, counts, and names, and its header
        bytes follow the published layout."""
        result = export(_manifest(image_root, tmp_path))
        from maskfed.datastore import load_bank  # the consuming simulator

        bank = load_bank(result.output)
        assert bank.dim == 16
        assert bank.n_classes == 2
        assert bank.n_samples == 6
        assert bank.class_names == ["melanoma", "nevus"]
        np.testing.assert_array_equal(bank.labels, [0, 0, 0, 1, 1, 1])
        raw = result.output.read_bytes()
        assert raw[:4] == b"FEMB"
        version, dim, n_classes, n_samples = struct.unpack(">HIII", raw[4:18])
        assert (version, dim, n_classes, n_samples) == (1, 16, 2, 6)
        (name_len,) = struct.unpack(">H", raw[18:20])
        assert raw[20 : 20 + name_len].decode() == "melanoma"

    def test_duplicate_images_produce_identical_records(self, image_root, tmp_path):
        duplicate = image_root / "melanoma" / "img_0_copy.png"
        duplicate.write_bytes((image_root / "melanoma" / "img_0.png").read_bytes())
        result = export(_manifest(image_root, tmp_path))
        bank = read_bank(result.output)
        # sorted order puts img_0 and its copy adjacent
        np.testing.assert_array_equal(bank.features[0], bank.features[1])

    def test_undecodable_image_is_skipped_with_warning(self, image_root, tmp_path):
        (image_root / "nevus" / "broken.png").write_bytes(b"not an image")
        with pytest.warns(UserWarning, match="broken.png"):
            result = export(_manifest(image_root, tmp_path))
        assert result.n_images == 6
        assert len(result.skipped) == 1 and "broken.png" in result.skipped[0]

    def test_zero_usable_images_is_an_error(self, tmp_path):
        root = tmp_path / "empty"
        (root / "melanoma").mkdir(parents=True)
        (root / "nevus").mkdir(parents=True)
        with pytest.raises(ExportError, match="no usable images"):
            export(_manifest(root, tmp_path))

    def test_missing_class_directory_is_an_error(self, image_root, tmp_path):
        manifest = _manifest(image_root, tmp_path, classes=["melanoma", "missing"])
        with pytest.raises(ExportError, match="missing"):
            export(manifest)

    def test_encoder_dim_matches_header(self, image_root, tmp_path):
        for dim in (8, 32):
            manifest = _manifest(
                image_root, tmp_path, backbone=f"test-hash-{dim}",
                output=str(tmp_path / f"d{dim}.femb"),
            )
            result = export(manifest)
            assert result.dim == dim
            assert read_bank(result.output).dim == dim

    def test_repeat_export_is_byte_identical(self, image_root, tmp_path):
        a = export(_manifest(image_root, tmp_path, output=str(tmp_path / "a.femb")))
        b = export(_manifest(image_root, tmp_path, output=str(tmp_path / "b.femb")))
        assert a.output.read_bytes() == b.output.read_bytes()

    def test_text_features_are_per_prompt_and_unit_free(self, image_root, tmp_path):
        result = export(_manifest(image_root, tmp_path))
        bank = read_bank(result.output)
        assert bank.text_features.shape == (2, 16)
        assert not np.array_equal(bank.text_features[0], bank.text_features[1])


class TestManifest:
    def test_load_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"image_root": "x", "classes": ["a"],
                                    "output": "o.femb", "oops": 1}))
        with pytest.raises(ManifestError, match="oops"):
            load_manifest(path)

    def test_load_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"classes": ["a"]}))
        with pytest.raises(ManifestError, match="image_root"):
            load_manifest(path)

    def test_empty_class_list_rejected(self, tmp_path):
        with pytest.raises(ManifestError, match="class list"):
            ExportManifest(image_root="x", classes=[], output="o.femb")

    def test_prompt_template_must_reference_class(self):
        with pytest.raises(ManifestError, match="prompt_template"):
            ExportManifest(
                image_root="x", classes=["a"], output="o.femb",
                prompt_template="no placeholder",
            )

    def test_default_prompt_formats_class_names(self, image_root, tmp_path):
        manifest = _manifest(image_root, tmp_path)
        encoder = HashProjectionEncoder(16)
        expected = encoder.encode_texts(
            ["a picture of a melanoma", "a picture of a nevus"]
        )
        result = export(manifest, encoder=encoder)
        bank = read_bank(result.output)
        np.testing.assert_array_equal(bank.text_features, expected)


class TestEncoders:
    def test_hash_encoder_is_deterministic(self, image_root):
        encoder = get_encoder("test-hash-16")
        image = Image.open(image_root / "melanoma" / "img_0.png").convert("RGB")
        a = encoder.encode_images([image])
        b = encoder.encode_images([image.copy()])
        np.testing.assert_array_equal(a, b)

    def test_hash_encoder_distinguishes_inputs(self, image_root):
        encoder = get_encoder("test-hash-16")
        a = Image.open(image_root / "melanoma" / "img_0.png").convert("RGB")
        b = Image.open(image_root / "nevus" / "img_2.png").convert("RGB")
        feats = encoder.encode_images([a, b])
        assert not np.array_equal(feats[0], feats[1])

    def test_backbone_selector_parses_dims(self):
        assert get_encoder("test-hash-24").dim == 24
        assert get_encoder("test-hash").dim == 16


class TestSelftestAndCli:
    def test_selftest_passes_on_fresh_install(self):
        assert selftest() is True

    def test_selftest_is_stable_across_reruns(self):
        assert selftest() is True
        assert selftest() is True

    def test_corrupted_write_is_detected(self, image_root, tmp_path):
        result = export(_manifest(image_root, tmp_path))
        data = bytearray(result.output.read_bytes())
        data[5] = 9  # version byte
        result.output.write_bytes(bytes(data))
        with pytest.raises(Exception, match="version"):
            read_bank(result.output)

    def test_cli_export_and_selftest(self, image_root, tmp_path, capsys):
        manifest_path = tmp_path / "m.json"
        manifest_path.write_text(
            json.dumps(
                {
                    "image_root": str(image_root),
                    "classes": ["melanoma", "nevus"],
                    "output": str(tmp_path / "cli.femb"),
                    "backbone": "test-hash-16",
                }
            )
        )
        assert cli_main(["export", "--manifest", str(manifest_path)]) == 0
        out = capsys.readouterr().out
        assert "N=6 D=16 C=2" in out
        assert cli_main(["selftest"]) == 0

    def test_cli_bad_manifest_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{broken json")
        assert cli_main(["export", "--manifest", str(path)]) == 2
        assert "manifest error" in capsys.readouterr().err
