"""GVOX container format and VTK legacy export.

GVOX layout (all integers little-endian):

    bytes 0..7    magic  b"GVOX\\x001\\x00\\x00"
    byte  8       dtype code (1 = float32, 3 = uint32, 4 = uint8)
    byte  9       flags (0)
    bytes 10..11  reserved (0)
    bytes 12..23  nx, ny, nz as uint32
    bytes 24..27  meta JSON length as uint32
    ...           meta JSON (UTF-8)
    ...           payload, x-fastest order, little-endian

``read_gvox(write_gvox(v))`` is bit-identical to ``v`` including metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError
from .volume import AnyVolume, LabelVolume, ScalarVolume, VolumeMeta, VoxelMask, _check_dims

MAGIC = b"GVOX\x001\x00\x00"

_HEADER = struct.Struct("<BBHIIII")

_DTYPE_CODES = {
    ScalarVolume: (1, np.dtype("<f4")),
    LabelVolume: (3, np.dtype("<u4")),
    VoxelMask: (4, np.dtype("<u1")),
}
_CODE_TYPES = {code: (cls, dt) for cls, (code, dt) in _DTYPE_CODES.items()}


def _meta_to_json(meta: VolumeMeta) -> bytes:
    doc = {
        "schema_version": meta.schema_version,
        "provenance": meta.provenance,
        "seed": meta.seed,
        "pitch": meta.pitch,
        "extra": meta.extra,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _meta_from_json(blob: bytes) -> VolumeMeta:
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata block is not valid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != 1:
        raise FormatError(f"unsupported schema version {version!r}")
    try:
        return VolumeMeta(
            provenance=doc["provenance"],
            seed=doc["seed"],
            schema_version=version,
            pitch=doc.get("pitch"),
            extra=doc.get("extra", {}),
        )
    except Exception as exc:
        raise FormatError(f"bad metadata fields: {exc}") from exc


def write_gvox(vol: AnyVolume, path) -> None:
    """Serialize a volume (scalar, label, or mask) to ``path``."""
    code, dt = _DTYPE_CODES[type(vol)]
    meta_blob = _meta_to_json(vol.meta)
    nx, ny, nz = vol.dims
    header = _HEADER.pack(code, 0, 0, nx, ny, nz, len(meta_blob))
    payload = np.ascontiguousarray(vol.ravel(), dtype=dt).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header)
            fh.write(meta_blob)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_gvox(path) -> AnyVolume:
    """Read a GVOX file back into its original volume type."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(blob) < len(MAGIC) + _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")

    code, flags, _res, nx, ny, nz, meta_len = _HEADER.unpack_from(blob, len(MAGIC))
    if code not in _CODE_TYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if flags != 0:
        raise FormatError(f"{path}: unsupported flags {flags}")
    try:
        dims = _check_dims((nx, ny, nz))
    except Exception as exc:
        raise FormatError(f"{path}: bad dims ({nx}, {ny}, {nz})") from exc

    cls, dt = _CODE_TYPES[code]
    offset = len(MAGIC) + _HEADER.size
    meta_blob = blob[offset : offset + meta_len]
    if len(meta_blob) != meta_len:
        raise FormatError(f"{path}: truncated metadata")
    meta = _meta_from_json(meta_blob)

    payload = blob[offset + meta_len :]
    expected = nx * ny * nz * dt.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype=dt)
    data = flat.reshape(dims, order="F").copy()
    return cls(data, meta)


def write_vtk_legacy(labels: LabelVolume, path, name: str = "grain_id") -> None:
    """Write labels as an ASCII VTK legacy STRUCTURED_POINTS file."""
    if not str(path):
        raise IoError("empty output path")
    nx, ny, nz = labels.dims
    flat = labels.ravel()
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write("grainforge label volume\n")
            fh.write("ASCII\n")
            fh.write("DATASET STRUCTURED_POINTS\n")
            fh.write(f"DIMENSIONS {nx} {ny} {nz}\n")
            fh.write("ORIGIN 0 0 0\n")
            fh.write("SPACING 1 1 1\n")
            fh.write(f"POINT_DATA {flat.size}\n")
            fh.write(f"SCALARS {name} unsigned_int 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for start in range(0, flat.size, 9):
                row = flat[start : start + 9]
                fh.write(" ".join(str(int(v)) for v in row))
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
