"""Versioned binary container of named float64 arrays.

Layout (little-endian)::

    b"T360CKPT"  u16 version  u16 len + kind (utf-8)  u32 count
    count x [ u16 len + name (utf-8)  u8 ndim  ndim x u32 dim  float64 data ]

Arrays are written in sorted name order, so equal contents give equal bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from tilestream.errors import InvalidInput

MAGIC = b"T360CKPT"
VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dump_checkpoint(kind: str, arrays: dict) -> bytes:
    out = [MAGIC, struct.pack("<H", VERSION), _pack_str(kind), struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        out.append(_pack_str(name))
        out.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes(order="C"))
    return b"".join(out)


def save_checkpoint(path, kind: str, arrays: dict) -> None:
    Path(path).write_bytes(dump_checkpoint(kind, arrays))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise InvalidInput(f"{self.path}: checkpoint is truncated")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def parse_checkpoint(raw: bytes, path="<bytes>") -> tuple[str, dict]:
    r = _Reader(raw, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise InvalidInput(f"{path}: not a checkpoint file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise InvalidInput(f"{path}: unsupported checkpoint version {version}")
    kind = r.string()
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        name = r.string()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(float)
    if r.pos != len(raw):
        raise InvalidInput(f"{path}: trailing bytes after checkpoint data")
    return kind, arrays


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InvalidInput(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    kind, arrays = parse_checkpoint(raw, path)
    if expected_kind is not None and kind != expected_kind:
        raise InvalidInput(f"{path}: checkpoint holds {kind!r}, expected {expected_kind!r}")
    return arrays
