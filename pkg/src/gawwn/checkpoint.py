"""Binary checkpoint files with bit-exact float64 round trips.

Layout (all integers unsigned 64-bit little-endian, floats little-endian
IEEE-754 double):

    magic   8 bytes  b"GAWWNCK1"
    count   u64      number of tensors
    tensor records, repeated `count` times, in insertion order:
        name_len  u64
        name      UTF-8 bytes
        rank      u64
        extents   rank * u64
        data      prod(extents) * 8 bytes, raw
    meta_len  u64
    meta      UTF-8 JSON object

Truncation or a bad magic raises FormatError carrying the byte offset at
which reading failed.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"GAWWNCK1"


def _pack_u64(n: int) -> bytes:
    return struct.pack("<Q", n)


def save_checkpoint(path: str, tensors: dict[str, object], meta: dict | None = None) -> None:
    """Write tensors (Tensor or ndarray values) and JSON metadata atomically."""
    chunks = [MAGIC, _pack_u64(len(tensors))]
    for name, value in tensors.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        # asarray with order="C", not ascontiguousarray: the latter promotes
        # rank-0 arrays to rank 1 and would break scalar round trips
        arr = np.asarray(arr, dtype="<f8", order="C")
        nb = name.encode("utf-8")
        chunks.append(_pack_u64(len(nb)))
        chunks.append(nb)
        chunks.append(_pack_u64(arr.ndim))
        for extent in arr.shape:
            chunks.append(_pack_u64(extent))
        chunks.append(arr.tobytes())
    mb = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    chunks.append(_pack_u64(len(mb)))
    chunks.append(mb)

    blob = b"".join(chunks)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.path}: truncated checkpoint, needed {n} bytes "
                f"at offset {self.pos} but file ends at {len(self.blob)}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors (insertion order preserved) and metadata."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise FormatError(f"{path}: cannot read checkpoint: {e}") from e

    r = _Reader(blob, path)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(
            f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}"
        )
    count = r.u64()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u64()
        name = r.take(name_len).decode("utf-8")
        rank = r.u64()
        shape = tuple(r.u64() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        raw = r.take(size * 8)
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    meta_len = r.u64()
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(
            f"{path}: corrupt metadata at offset {r.pos - meta_len}: {e}"
        ) from e
    if r.pos != len(blob):
        raise FormatError(
            f"{path}: {len(blob) - r.pos} trailing bytes at offset {r.pos}"
        )
    return tensors, meta
