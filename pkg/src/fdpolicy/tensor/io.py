"""Flat little-endian array container: ``b"FDAR"``, u32 rank, u64 dims, f64 data."""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FDAR"


def dumps_array(a) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    head = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def loads_array(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one array starting at ``offset``; return it and the end offset."""
    if buf[offset:offset + 4] != MAGIC:
        raise ValueError(f"bad array magic at offset {offset}")
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    pos = offset + 8
    shape = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    n = int(np.prod(shape, dtype=np.int64))
    end = pos + 8 * n
    if end > len(buf):
        raise ValueError("truncated array payload")
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64)
    return data.reshape(shape), end


def save_array(path, a) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_array(a))


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = loads_array(buf)
    if end != len(buf):
        raise ValueError("trailing bytes after array")
    return arr
