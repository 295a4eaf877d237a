"""Bit-exact wire format for parameter transmission.

Parameters travel as half-precision values inside a deflate-compressed
payload. The uncompressed payload layout, all integers big-endian:

    magic "FMC1" | version u16=1 | tensor count u32
    | per tensor: name_len u16, name utf-8, dtype u8 (1 = binary16),
      ndim u8, each dim u32, raw big-endian binary16 values (row-major)

Values outside the half-precision range saturate at +/-65504; rounding is
IEEE round-to-nearest-even. Decoding widens exactly to float32.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    MalformedPacketError,
    SerializationError,
    TruncatedPayloadError,
    UnknownDtypeError,
)
from .numerics import Array

MAGIC = b"FMC1"
VERSION = 1
DTYPE_F16 = 1
HALF_MAX = 65504.0
COMPRESSION_LEVEL = 6


@dataclass
class WirePacket:
    """Compressed parameter payload plus its uncompressed length."""

    data: bytes
    raw_len: int


def encode_payload(tensors: dict[str, Array]) -> bytes:
    """Serialize named tensors to the uncompressed payload."""
    parts = [MAGIC, struct.pack(">HI", VERSION, len(tensors))]
    for name, tensor in tensors.items():
        arr = np.asarray(tensor, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise SerializationError(f"tensor {name!r} contains non-finite values")
        encoded = name.encode("utf-8")
        parts.append(struct.pack(">H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(">BB", DTYPE_F16, arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack(">I", dim))
        clipped = np.clip(arr, -HALF_MAX, HALF_MAX)
        parts.append(np.ascontiguousarray(clipped).astype(">f2").tobytes())
    return b"".join(parts)


def pack(tensors: dict[str, Array]) -> WirePacket:
    payload = encode_payload(tensors)
    return WirePacket(zlib.compress(payload, COMPRESSION_LEVEL), len(payload))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"payload ends at {len(self.data)}, needed {n} bytes at {self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def decode_payload(payload: bytes) -> dict[str, Array]:
    """Parse an uncompressed payload into float32 tensors, failing closed."""
    cur = _Cursor(payload)
    if cur.take(4) != MAGIC:
        raise BadMagicError("bad magic: payload does not start with FMC1")
    version, count = struct.unpack(">HI", cur.take(6))
    if version != VERSION:
        raise MalformedPacketError(f"unsupported packet version {version}")
    tensors: dict[str, Array] = {}
    for i in range(count):
        (name_len,) = struct.unpack(">H", cur.take(2))
        name = cur.take(name_len).decode("utf-8")
        dtype, ndim = struct.unpack(">BB", cur.take(2))
        if dtype != DTYPE_F16:
            raise UnknownDtypeError(f"tensor {name!r} has unknown dtype code {dtype}")
        shape = tuple(
            struct.unpack(">I", cur.take(4))[0] for _ in range(ndim)
        )
        n_values = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = cur.take(2 * n_values)
        values = np.frombuffer(raw, dtype=">f2").astype(np.float32)
        if name in tensors:
            raise MalformedPacketError(f"duplicate tensor name {name!r}")
        tensors[name] = values.reshape(shape)
    if cur.pos != len(payload):
        raise MalformedPacketError(
            f"{len(payload) - cur.pos} trailing bytes after tensor table"
        )
    return tensors


def unpack(packet: WirePacket | bytes) -> dict[str, Array]:
    """Decompress and parse a packet into float32 tensors."""
    data = packet.data if isinstance(packet, WirePacket) else packet
    try:
        payload = zlib.decompress(data)
    except zlib.error as exc:
        raise BadMagicError(
            f"bad magic: not a deflate-framed packet ({exc})"
        ) from exc
    return decode_payload(payload)


def write_packet(packet: WirePacket, path: str | Path) -> None:
    Path(path).write_bytes(packet.data)


def read_packet(path: str | Path) -> WirePacket:
    data = Path(path).read_bytes()
    try:
        raw_len = len(zlib.decompress(data))
    except zlib.error as exc:
        raise BadMagicError(
            f"bad magic: not a deflate-framed packet ({exc})"
        ) from exc
    return WirePacket(data, raw_len)


def packed_size(packet: WirePacket) -> int:
    return len(packet.data)


def float32_baseline(tensors: dict[str, Array]) -> int:
    """Bytes a plain float32 transfer of the same tensors would need."""
    return 4 * sum(int(np.asarray(t).size) for t in tensors.values())
