"""Flat little-endian binary tensor files: magic, rows, cols, row-major float32."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NKT1"
_HEADER = struct.Struct("<4sII")


class TensorFormatError(ValueError):
    pass


def save_tensor(path, values) -> None:
    arr = np.asarray(getattr(values, "values", values))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise TensorFormatError(f"only 2-D tensors can be saved, got shape {arr.shape}")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise TensorFormatError(f"{path}: expected {rows * cols * 4} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)
