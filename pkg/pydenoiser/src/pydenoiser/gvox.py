"""Minimal GVOX reader for label volumes (the training-data interchange format).

Layout: 8-byte magic "GVOX\\x001\\x00\\x00", then little-endian header
(u8 dtype code, u8 flags, u16 reserved, 3x u32 dims, u32 metadata length),
UTF-8 JSON metadata, raw little-endian payload in x-fastest order.
Dtype codes: 1 float32, 3 uint32, 4 uint8.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GVOX\x001\x00\x00"
_HEADER = struct.Struct("<BBHIIII")
_DTYPES = {1: np.dtype("<f4"), 3: np.dtype("<u4"), 4: np.dtype("<u1")}


class GvoxError(ValueError):
    pass


def read_gvox(path) -> tuple[np.ndarray, dict]:
    """Return (volume indexed [x, y, z], metadata dict)."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise GvoxError(f"{path}: bad magic")
    code, _flags, _res, nx, ny, nz, meta_len = _HEADER.unpack_from(blob, len(MAGIC))
    if code not in _DTYPES:
        raise GvoxError(f"{path}: unknown dtype code {code}")
    offset = len(MAGIC) + _HEADER.size
    meta = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    if meta.get("schema_version") != 1:
        raise GvoxError(f"{path}: unsupported schema version")
    dt = _DTYPES[code]
    payload = blob[offset + meta_len :]
    expected = nx * ny * nz * dt.itemsize
    if len(payload) != expected:
        raise GvoxError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype=dt).reshape((nx, ny, nz), order="F")
    return data.copy(), meta
