"""Embedding banks: binary file format, stratified splits, heterogeneous
client partitions, and a synthetic feature-shift generator.

A bank stores precomputed image features with labels plus one text feature
per class, so the simulator never has to run an encoder. The on-disk format
(extension ``.femb``, all integers big-endian) is:

    magic "FEMB" | version u16=1 | D u32 | C u32 | N u32
    | C * (name_len u16, name utf-8)
    | C * D float32 text features
    | N * (label u16, D float32 image features)

Features are stored as float32 and widened to float64 on load; banks are
generated in float32 so a write/load round trip is exact.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BankFormatError, DegenerateInputError, InvalidInputError
from .numerics import Array, stream

MAGIC = b"FEMB"
VERSION = 1


@dataclass
class EmbeddingBank:
    """In-memory bank of image features (N, D), labels (N,), per-class text
    features (C, D), and class names."""

    class_names: list[str]
    text_features: Array   # (C, D) float64
    features: Array        # (N, D) float64
    labels: Array          # (N,) int64

    def __post_init__(self) -> None:
        self.text_features = np.asarray(self.text_features, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        c, d = self.text_features.shape
        if len(self.class_names) != c:
            raise InvalidInputError("class name count does not match text features")
        if self.features.ndim != 2 or (self.features.size and self.features.shape[1] != d):
            raise InvalidInputError("feature dimension does not match text features")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidInputError("labels must align with features")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= c):
            raise InvalidInputError(f"labels must lie in [0, {c})")
        if not (np.all(np.isfinite(self.text_features)) and np.all(np.isfinite(self.features))):
            raise InvalidInputError("bank contains non-finite features")

    @property
    def dim(self) -> int:
        return self.text_features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.text_features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: Array) -> "EmbeddingBank":
        indices = np.asarray(indices, dtype=np.int64)
        return EmbeddingBank(
            class_names=list(self.class_names),
            text_features=self.text_features.copy(),
            features=self.features[indices].copy(),
            labels=self.labels[indices].copy(),
        )


def write_bank(bank: EmbeddingBank, path: str | Path) -> None:
    if bank.n_classes > 0xFFFF:
        raise InvalidInputError("at most 65535 classes are supported")
    parts = [MAGIC, struct.pack(">HIII", VERSION, bank.dim, bank.n_classes, bank.n_samples)]
    for name in bank.class_names:
        encoded = name.encode("utf-8")
        parts.append(struct.pack(">H", len(encoded)))
        parts.append(encoded)
    parts.append(bank.text_features.astype(">f4").tobytes())
    feats32 = bank.features.astype(">f4")
    for i in range(bank.n_samples):
        parts.append(struct.pack(">H", int(bank.labels[i])))
        parts.append(feats32[i].tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BankFormatError(
                f"truncated bank file: needed {n} bytes at offset {self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_bank(path: str | Path) -> EmbeddingBank:
    """Parse a bank file, failing closed on any structural defect."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise BankFormatError(f"bad magic in {path}")
    version, dim, n_classes, n_samples = struct.unpack(">HIII", r.take(14))
    if version != VERSION:
        raise BankFormatError(f"unsupported bank version {version}")
    names = []
    for _ in range(n_classes):
        (name_len,) = struct.unpack(">H", r.take(2))
        names.append(r.take(name_len).decode("utf-8"))
    text = np.frombuffer(r.take(4 * n_classes * dim), dtype=">f4").reshape(
        n_classes, dim
    )
    labels = np.empty(n_samples, dtype=np.int64)
    feats = np.empty((n_samples, dim), dtype=np.float64)
    for i in range(n_samples):
        (label,) = struct.unpack(">H", r.take(2))
        if label >= n_classes:
            raise BankFormatError(f"sample {i} has label {label} >= {n_classes}")
        labels[i] = label
        feats[i] = np.frombuffer(r.take(4 * dim), dtype=">f4")
    if r.pos != len(r.data):
        raise BankFormatError(f"{len(r.data) - r.pos} trailing bytes in {path}")
    return EmbeddingBank(
        class_names=names,
        text_features=text.astype(np.float64),
        features=feats,
        labels=labels,
    )


@dataclass
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise InvalidInputError("split fractions must sum to 1")


def largest_remainder(total: int, fractions: list[float]) -> list[int]:
    """Apportion ``total`` seats to fractions exactly, floors first and the
    remaining seats by descending fractional remainder (earlier part wins
    ties)."""
    quotas = [total * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(
        range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_bank(
    bank: EmbeddingBank, spec: SplitSpec
) -> tuple[EmbeddingBank, EmbeddingBank, EmbeddingBank]:
    """Stratified train/val/test partition with exact per-class rounding."""
    if bank.n_samples < 5:
        raise InvalidInputError("bank too small to split (need at least 5 samples)")
    fractions = [spec.train, spec.val, spec.test]
    parts: list[list[int]] = [[], [], []]
    for c in range(bank.n_classes):
        idx = np.flatnonzero(bank.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 3:
            warnings.warn(
                f"class {c} has only {idx.size} sample(s); split is best-effort",
                stacklevel=2,
            )
        rng = stream(spec.seed, f"split/class{c}")
        idx = idx[rng.permutation(idx.size)]
        counts = largest_remainder(idx.size, fractions)
        start = 0
        for part, count in zip(parts, counts):
            part.extend(idx[start : start + count].tolist())
            start += count
    return tuple(bank.subset(np.sort(np.array(p, dtype=np.int64))) for p in parts)


def dirichlet_partition(
    bank: EmbeddingBank, n_clients: int, alpha: float, seed: int
) -> list[EmbeddingBank]:
    """Split a bank into heterogeneous client banks.

    For each class, client proportions are drawn from a symmetric Dirichlet
    (gamma draws normalized) and the class's samples are apportioned by
    largest remainder, so the client banks partition the input exactly.
    Redraws everything up to 10 times if some client ends up empty.
    """
    if n_clients < 2:
        raise InvalidInputError("need at least 2 clients")
    if not (alpha > 0):
        raise InvalidInputError("alpha must be positive")
    rng = stream(seed, "dirichlet")
    for _ in range(10):
        assignments: list[list[int]] = [[] for _ in range(n_clients)]
        for c in range(bank.n_classes):
            idx = np.flatnonzero(bank.labels == c)
            if idx.size == 0:
                continue
            idx = idx[rng.permutation(idx.size)]
            gamma = rng.gamma(alpha, 1.0, size=n_clients)
            proportions = gamma / gamma.sum()
            counts = largest_remainder(idx.size, proportions.tolist())
            start = 0
            for k in range(n_clients):
                assignments[k].extend(idx[start : start + counts[k]].tolist())
                start += counts[k]
        if all(len(a) > 0 for a in assignments):
            return [
                bank.subset(np.sort(np.array(a, dtype=np.int64)))
                for a in assignments
            ]
    raise DegenerateInputError(
        f"could not give every one of {n_clients} clients data in 10 draws"
    )


def random_orthogonal(dim: int, rng: np.random.Generator) -> Array:
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def gen_synthetic(
    n_clients: int,
    dim: int,
    n_classes: int,
    n_per_client: int,
    shift_mode: str = "rotation",
    seed: int = 0,
    sigma: float = 0.15,
    n_global: int | None = None,
) -> tuple[list[EmbeddingBank], EmbeddingBank]:
    """Desk-scale stand-in for per-site feature shift.

    Unit-norm class prototypes double as text features. Each client sees the
    prototypes through its own transform (a Haar rotation, a random diagonal
    scaling, or nothing), plus isotropic noise; a held-out transform produces
    the global bank. Labels are balanced. Everything is generated in float32
    so banks survive a file round trip bit-exactly.
    """
    if not (dim >= n_classes >= 2):
        raise InvalidInputError("need dim >= classes >= 2")
    if shift_mode not in ("rotation", "scaling", "none"):
        raise InvalidInputError(f"unknown shift_mode: {shift_mode}")
    if n_global is None:
        n_global = n_per_client
    protos = stream(seed, "synth/protos").standard_normal((n_classes, dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    names = [f"class{c}" for c in range(n_classes)]

    def transform(tag: str) -> Array:
        if shift_mode == "rotation":
            return random_orthogonal(dim, stream(seed, f"synth/rot/{tag}"))
        if shift_mode == "scaling":
            scales = stream(seed, f"synth/scale/{tag}").uniform(0.5, 1.5, size=dim)
            return np.diag(scales)
        return np.eye(dim)

    def make_bank(tag: str, n: int) -> EmbeddingBank:
        t = transform(tag)
        labels = np.arange(n, dtype=np.int64) % n_classes
        noise = sigma * stream(seed, f"synth/noise/{tag}").standard_normal((n, dim))
        feats = (protos[labels] + noise) @ t.T
        return EmbeddingBank(
            class_names=names,
            text_features=protos.astype(np.float32).astype(np.float64),
            features=feats.astype(np.float32).astype(np.float64),
            labels=labels,
        )

    clients = [make_bank(f"client{k}", n_per_client) for k in range(n_clients)]
    global_bank = make_bank("global", n_global)
    return clients, global_bank
