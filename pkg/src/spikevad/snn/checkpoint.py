"""MSFW checkpoint files: named float32 arrays, little-endian.

Layout: ``b"MSFW"``, u32 array count, then per array a u16 name length,
the UTF-8 name, u8 ndim, ndim x u32 dims, and the f32 payload.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"MSFW"


class CheckpointError(ValueError):
    pass


def encode_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"array {name!r} cannot be encoded")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def decode_arrays(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    pos = 4

    def unpack(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"truncated at offset {pos}")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (count,) = unpack("<I")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = unpack("<H")
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = unpack("<B")
        dims = unpack(f"<{ndim}I")
        n = int(np.prod(dims, dtype=np.int64))
        if pos + 4 * n > len(data):
            raise CheckpointError(f"array {name!r} truncated")
        out[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes")
    return out


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_arrays(arrays))


def load_arrays(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return decode_arrays(fh.read())
