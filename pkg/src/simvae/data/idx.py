"""Reader for the IDX format used by MNIST and Fashion-MNIST.

Header (big-endian): two zero bytes, a type code (0x08 = uint8), the number
of dimensions, then one u32 per dimension. Images use magic 0x00000803
(N x rows x cols), labels 0x00000801 (N).
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import IdxDimensionError, IdxMagicError, IdxTruncatedError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_NDIM = {IMAGE_MAGIC: 3, LABEL_MAGIC: 1}


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def read_idx(path) -> np.ndarray:
    """Raw uint8 contents with the header's dimensions."""
    buf = _read_bytes(path)
    if len(buf) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic not in _NDIM:
        raise IdxMagicError(f"{path}: unsupported magic 0x{magic:08x}")
    ndim = _NDIM[magic]
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxTruncatedError(f"{path}: header truncated")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = len(buf) - header
    if payload < expected:
        raise IdxTruncatedError(f"{path}: payload has {payload} bytes, dims {dims} need {expected}")
    if payload > expected:
        raise IdxDimensionError(f"{path}: payload has {payload} bytes but dims {dims} describe {expected}")
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims).copy()


def load_idx(path) -> np.ndarray:
    """Images as float32 in [0, 1]; label vectors as int64."""
    raw = read_idx(path)
    if raw.ndim == 3:
        return raw.astype(np.float32) / np.float32(255.0)
    return raw.astype(np.int64)


def write_idx(path, arr) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    magic = {3: IMAGE_MAGIC, 1: LABEL_MAGIC}[arr.ndim]
    header = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())
