"""Binary container used for checkpoints, datasets and representation tables.

Layout (all integers little-endian)::

    b"SVAE"                      magic
    u32  version
    u32  metadata length, then UTF-8 text: one ``key=<json value>`` per line
    u32  array count, then per array:
         u16 name length, name (UTF-8)
         u8  dtype length, numpy dtype string (e.g. ``<f4``)
         u8  ndim, ndim x u64 shape
         u64 offset into the data section, u64 byte count
    raw array bytes, concatenated in table order

Writing is deterministic: identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)

MAGIC = b"SVAE"
VERSION = 1


def _encode_meta(meta: dict) -> bytes:
    lines = []
    for k, v in meta.items():
        if "=" in k or "\n" in k:
            raise ValueError(f"invalid metadata key {k!r}")
        lines.append(f"{k}={json.dumps(v, sort_keys=True, separators=(',', ':'))}")
    return "\n".join(lines).encode("utf-8")


def _decode_meta(raw: bytes) -> dict:
    meta = {}
    text = raw.decode("utf-8")
    for line in text.split("\n") if text else []:
        k, _, v = line.partition("=")
        meta[k] = json.loads(v)
    return meta


def write_container(path, meta: dict, arrays: dict) -> None:
    meta_b = _encode_meta(meta)
    table, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.byteorder == ">" or (arr.dtype.byteorder == "=" and not np.little_endian):
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        arr = np.ascontiguousarray(arr)
        blob = arr.tobytes()
        name_b = name.encode("utf-8")
        dt = arr.dtype.str.encode("ascii")
        entry = struct.pack("<H", len(name_b)) + name_b + struct.pack("<B", len(dt)) + dt
        entry += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        entry += struct.pack("<QQ", offset, len(blob))
        table.append(entry)
        blobs.append(blob)
        offset += len(blob)
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(meta_b)) + meta_b
    out += struct.pack("<I", len(table)) + b"".join(table)
    out += b"".join(blobs)
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(
                f"file truncated: needed {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path) -> tuple[dict, dict]:
    buf = Path(path).read_bytes()
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic bytes {buf[:4]!r}")
    r.take(4)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: container version {version}, expected {VERSION}")
    (mlen,) = r.unpack("<I")
    try:
        meta = _decode_meta(r.take(mlen))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt metadata ({exc})") from None
    (count,) = r.unpack("<I")
    entries = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (dlen,) = r.unpack("<B")
        dtype = np.dtype(r.take(dlen).decode("ascii"))
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        off, nbytes = r.unpack("<QQ")
        entries.append((name, dtype, shape, off, nbytes))
    base = r.pos
    arrays = {}
    for name, dtype, shape, off, nbytes in entries:
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected:
            raise CheckpointFormatError(f"{path}: array {name!r} size {nbytes} != {expected}")
        start = base + off
        if start + nbytes > len(buf):
            raise CheckpointTruncatedError(f"{path}: array {name!r} runs past end of file")
        arrays[name] = np.frombuffer(buf, dtype=dtype, count=nbytes // max(dtype.itemsize, 1), offset=start).reshape(shape).copy()
    return meta, arrays
