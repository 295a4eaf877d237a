"""Export pipeline: image folders in, one embedding-bank file out.

Images live under ``image_root/<class_name>/``; each listed class name must
have a directory. Every image becomes one feature record; each class prompt
is encoded once. Features are written unnormalized (consumers normalize when
they compute cosine similarities).
"""

from __future__ import annotations

import json
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import DEFAULT_BACKBONE, get_encoder
from .format import Bank, header_bytes, read_bank, write_bank

DEFAULT_PROMPT = "a picture of a {class}"


class ManifestError(ValueError):
    pass


class ExportError(RuntimeError):
    pass


@dataclass
class ExportManifest:
    image_root: str
    classes: list[str]
    output: str
    prompt_template: str = DEFAULT_PROMPT
    backbone: str = DEFAULT_BACKBONE
    device: str = "cpu"

    def __post_init__(self) -> None:
        if not self.classes:
            raise ManifestError("class list must not be empty")
        if "{class}" not in self.prompt_template:
            raise ManifestError("prompt_template must contain '{class}'")


_MANIFEST_KEYS = {f.name for f in ExportManifest.__dataclass_fields__.values()}


def load_manifest(path: str | Path) -> ExportManifest:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest root must be a JSON object")
    unknown = set(raw) - _MANIFEST_KEYS
    if unknown:
        raise ManifestError(f"unknown manifest key(s): {', '.join(sorted(unknown))}")
    missing = {"image_root", "classes", "output"} - set(raw)
    if missing:
        raise ManifestError(f"missing manifest key(s): {', '.join(sorted(missing))}")
    return ExportManifest(**raw)


@dataclass
class ExportResult:
    output: Path
    dim: int
    n_classes: int
    n_images: int
    skipped: list[str] = field(default_factory=list)


def export(manifest: ExportManifest, encoder=None) -> ExportResult:
    """Encode every decodable image and each class prompt, then write the
    bank. Undecodable images are skipped with a warning; exporting nothing
    is an error."""
    if encoder is None:
        encoder = get_encoder(manifest.backbone, manifest.device)
    root = Path(manifest.image_root)
    images: list[Image.Image] = []
    labels: list[int] = []
    skipped: list[str] = []
    for label, class_name in enumerate(manifest.classes):
        class_dir = root / class_name
        if not class_dir.is_dir():
            raise ExportError(f"no directory for class {class_name!r} under {root}")
        for path in sorted(class_dir.iterdir()):
            if not path.is_file():
                continue
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB").copy())
            except (UnidentifiedImageError, OSError) as exc:
                warnings.warn(f"skipping undecodable image {path}: {exc}", stacklevel=2)
                skipped.append(str(path))
                continue
            labels.append(label)
    if not images:
        raise ExportError("no usable images found")
    features = encoder.encode_images(images)
    prompts = [
        manifest.prompt_template.format(**{"class": name})
        for name in manifest.classes
    ]
    text_features = encoder.encode_texts(prompts)
    bank = Bank(
        class_names=list(manifest.classes),
        text_features=text_features,
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
    )
    write_bank(bank, manifest.output)
    written = read_bank(manifest.output)
    if written.dim != features.shape[1]:
        raise ExportError(
            f"header dim {written.dim} does not match encoder dim {features.shape[1]}"
        )
    return ExportResult(
        output=Path(manifest.output),
        dim=written.dim,
        n_classes=len(manifest.classes),
        n_images=len(images),
        skipped=skipped,
    )


def _checker_image(value: int) -> Image.Image:
    pixels = np.zeros((16, 16, 3), dtype=np.uint8)
    pixels[::2, ::2] = (value, 255 - value, 128)
    pixels[1::2, 1::2] = (255 - value, value, 64)
    return Image.fromarray(pixels)


def selftest() -> bool:
    """Write a 4-sample bank with the bundled stub encoder, re-read it with
    the bundled reader, and byte-compare the header against a reconstruction
    from the parsed fields."""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        for class_name, shades in (("alpha", (10, 60)), ("beta", (150, 220))):
            (root / class_name).mkdir()
            for i, shade in enumerate(shades):
                _checker_image(shade).save(root / class_name / f"{i}.png")
        out = root / "selftest.femb"
        manifest = ExportManifest(
            image_root=str(root),
            classes=["alpha", "beta"],
            output=str(out),
            backbone="test-hash-8",
        )
        result = export(manifest)
        bank = read_bank(out)
        expected_header = header_bytes(
            bank.dim, len(bank.class_names), bank.features.shape[0], bank.class_names
        )
        actual_header = out.read_bytes()[: len(expected_header)]
        ok = (
            actual_header == expected_header
            and result.n_images == 4
            and bank.features.shape == (4, 8)
            and bank.class_names == ["alpha", "beta"]
        )
    return ok
