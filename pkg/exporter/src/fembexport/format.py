"""Self-contained embedding-bank file format support.

The exporter bundles its own writer and reader so the byte layout is a
contract, not a shared import. All integers are big-endian:

    magic "FEMB" | version u16=1 | D u32 | C u32 | N u32
    | C * (name_len u16, name utf-8)
    | C * D float32 text features
    | N * (label u16, D float32 image features)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"FEMB"
VERSION = 1


class FormatError(ValueError):
    """Raised when a bank file violates the layout."""


@dataclass
class Bank:
    class_names: list[str]
    text_features: np.ndarray  # (C, D) float32
    features: np.ndarray       # (N, D) float32
    labels: np.ndarray         # (N,) int

    @property
    def dim(self) -> int:
        return self.text_features.shape[1]


def header_bytes(dim: int, n_classes: int, n_samples: int, names: list[str]) -> bytes:
    """The fixed-plus-name prefix of a bank file, for byte-level checks."""
    parts = [MAGIC, struct.pack(">HIII", VERSION, dim, n_classes, n_samples)]
    for name in names:
        encoded = name.encode("utf-8")
        parts.append(struct.pack(">H", len(encoded)))
        parts.append(encoded)
    return b"".join(parts)


def write_bank(bank: Bank, path: str | Path) -> None:
    text = np.ascontiguousarray(bank.text_features, dtype=np.float32)
    feats = np.ascontiguousarray(bank.features, dtype=np.float32)
    labels = np.asarray(bank.labels)
    n_classes, dim = text.shape
    n_samples = feats.shape[0]
    if len(bank.class_names) != n_classes:
        raise FormatError("class name count does not match text features")
    if feats.ndim != 2 or (n_samples and feats.shape[1] != dim):
        raise FormatError("feature dim does not match text features")
    if labels.shape != (n_samples,):
        raise FormatError("labels must align with features")
    if n_samples and (labels.min() < 0 or labels.max() >= n_classes):
        raise FormatError("labels out of range")
    parts = [header_bytes(dim, n_classes, n_samples, bank.class_names)]
    parts.append(text.astype(">f4").tobytes())
    feats_be = feats.astype(">f4")
    for i in range(n_samples):
        parts.append(struct.pack(">H", int(labels[i])))
        parts.append(feats_be[i].tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_bank(path: str | Path) -> Bank:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated bank: needed {n} bytes at {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise FormatError("bad magic")
    version, dim, n_classes, n_samples = struct.unpack(">HIII", take(14))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    names = []
    for _ in range(n_classes):
        (name_len,) = struct.unpack(">H", take(2))
        names.append(take(name_len).decode("utf-8"))
    text = np.frombuffer(take(4 * n_classes * dim), dtype=">f4").reshape(
        n_classes, dim
    ).astype(np.float32)
    labels = np.empty(n_samples, dtype=np.int64)
    feats = np.empty((n_samples, dim), dtype=np.float32)
    for i in range(n_samples):
        (label,) = struct.unpack(">H", take(2))
        if label >= n_classes:
            raise FormatError(f"sample {i} label {label} out of range")
        labels[i] = label
        feats[i] = np.frombuffer(take(4 * dim), dtype=">f4")
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes")
    return Bank(names, text, feats, labels)
