"""Standalone EMBF reader/writer.

This package talks to the detection toolkit purely through its on-disk
formats, so the binary format is implemented here independently rather than
imported. Layout (little-endian, 33-byte header):

    0..3   magic b"EMBF"
    4..5   version u16 (1)
    6      dtype u8: 1 float32, 2 float64
    7      reserved u8 (0)
    8..15  rows u64
    16..23 cols u64
    24..31 reserved u64 (0)
    32     normalized flag u8
    33..   row-major payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBF"
VERSION = 1
_HEADER = struct.Struct("<4sHBBQQQB")
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPES = {1: np.float32, 2: np.float64}


def write_embf(path: str | Path, values: np.ndarray, normalized: bool) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("EMBF stores 2-D matrices")
    if values.dtype not in _CODES:
        raise ValueError(f"unsupported dtype {values.dtype}")
    if not np.isfinite(values).all():
        raise ValueError("refusing to write non-finite values")
    header = _HEADER.pack(
        MAGIC, VERSION, _CODES[values.dtype], 0,
        values.shape[0], values.shape[1], 0, 1 if normalized else 0,
    )
    payload = np.ascontiguousarray(values, dtype=values.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(header + payload)


def read_embf(path: str | Path) -> tuple[np.ndarray, bool]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: shorter than the EMBF header")
    magic, version, code, _, rows, cols, _, flag = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype code {code}")
    dtype = np.dtype(_DTYPES[code]).newbyteorder("<")
    expected = rows * cols * dtype.itemsize
    if len(blob) - _HEADER.size < expected:
        raise ValueError(f"{path}: truncated payload")
    flat = np.frombuffer(blob, dtype=dtype, count=rows * cols, offset=_HEADER.size)
    return np.asarray(flat, dtype=_DTYPES[code]).reshape(rows, cols).copy(), bool(flag)
