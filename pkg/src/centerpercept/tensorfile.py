"""``.tns`` tensor files.

Layout (all little-endian)::

    b"TNS1"   magic
    u8        dtype code (0 = float32)
    u8        rank
    2 bytes   reserved, zero
    u64 * rank  dims
    payload   row-major float32, 4 * prod(dims) bytes
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"TNS1"
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBB2s")


class TensorFormatError(ValueError):
    """Malformed tensor file; the message carries the byte offset."""


def to_bytes(array) -> bytes:
    # ascontiguousarray would promote a 0-d array to shape (1,)
    arr = np.array(array, dtype="<f4", order="C", copy=True)
    if arr.ndim > 255:
        raise ValueError("rank above 255 is not representable")
    head = _HEADER.pack(MAGIC, DTYPE_F32, arr.ndim, b"\0\0")
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + arr.tobytes(order="C")


def from_bytes(data: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(data) < _HEADER.size:
        raise TensorFormatError(f"{source}: truncated header ({len(data)} bytes, need {_HEADER.size})")
    magic, dtype, rank, reserved = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{source}: bad magic {magic!r} at byte 0")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"{source}: unsupported dtype code {dtype} at byte 4")
    if reserved != b"\0\0":
        raise TensorFormatError(f"{source}: reserved bytes at offset 6 must be zero")
    off = _HEADER.size
    if len(data) < off + 8 * rank:
        raise TensorFormatError(f"{source}: truncated dims at byte {len(data)}, need {off + 8 * rank}")
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    count = int(np.prod(dims, dtype=np.uint64)) if rank else 1
    expected = off + 4 * count
    if len(data) != expected:
        raise TensorFormatError(
            f"{source}: payload ends at byte {len(data)}, dims {tuple(dims)} need {expected}"
        )
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
    return arr.reshape(dims).astype(np.float32)


def write_tensor(path: str | os.PathLike, array) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(array))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return from_bytes(f.read(), str(path))
