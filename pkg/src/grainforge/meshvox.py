"""STL parsing, inside/outside voxelization, and CAD masking.

Voxelization samples voxel centers: a center is inside when an axis-aligned
ray starting there crosses the mesh an odd number of times. Rays are cast
along all three axes and majority-voted, which suppresses single-ray parity
errors from edge grazes; sample points also carry a tiny irrational jitter
so exact vertex/edge hits cannot occur for meshes with rational coordinates.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidConfig, IoError, NonWatertightWarning, ShapeMismatch
from .volume import LabelVolume, VolumeMeta, VoxelMask

_JITTER_U = 2.3841857e-06 * np.sqrt(2.0)
_JITTER_V = 2.3841857e-06 * np.sqrt(3.0)

_BIN_TRI = struct.Struct("<12fH")


@dataclass
class TriangleMesh:
    """Triangle soup; shape (n, 3 vertices, 3 coords)."""

    triangles: np.ndarray

    def __post_init__(self):
        tris = np.asarray(self.triangles, dtype=np.float64)
        if tris.ndim != 3 or tris.shape[1:] != (3, 3) or tris.shape[0] < 1:
            raise InvalidConfig(f"triangles must have shape (n, 3, 3), got {tris.shape}")
        if not np.isfinite(tris).all():
            raise InvalidConfig("mesh contains non-finite coordinates")
        self.triangles = tris

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.triangles.reshape(-1, 3)
        return flat.min(axis=0), flat.max(axis=0)


def read_stl(path) -> TriangleMesh:
    """Read a binary or ASCII STL file."""
    try:
        blob = open(path, "rb").read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(blob) >= 84:
        (count,) = struct.unpack_from("<I", blob, 80)
        if len(blob) == 84 + 50 * count and count > 0:
            return _parse_binary(blob, count)
    if blob.lstrip()[:5].lower() == b"solid":
        return _parse_ascii(blob, path)
    if len(blob) >= 84:
        (count,) = struct.unpack_from("<I", blob, 80)
        raise FormatError(
            f"{path}: binary STL header claims {count} triangles "
            f"but file holds {(len(blob) - 84) // 50}"
        )
    raise FormatError(f"{path}: not a recognizable STL file")


def _parse_binary(blob: bytes, count: int) -> TriangleMesh:
    tris = np.empty((count, 3, 3), dtype=np.float64)
    for i in range(count):
        rec = _BIN_TRI.unpack_from(blob, 84 + 50 * i)
        tris[i] = np.array(rec[3:12], dtype=np.float64).reshape(3, 3)
    return TriangleMesh(tris)


def _parse_ascii(blob: bytes, path) -> TriangleMesh:
    try:
        tokens = blob.decode("ascii", errors="strict").split()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not ASCII STL: {exc}") from exc
    tris = []
    i = 0
    try:
        while i < len(tokens):
            if tokens[i].lower() == "vertex":
                v = [float(tokens[i + 1]), float(tokens[i + 2]), float(tokens[i + 3])]
                tris.append(v)
                i += 4
            else:
                i += 1
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed ASCII STL: {exc}") from exc
    if not tris or len(tris) % 3 != 0:
        raise FormatError(f"{path}: ASCII STL vertex count {len(tris)} not a multiple of 3")
    return TriangleMesh(np.array(tris, dtype=np.float64).reshape(-1, 3, 3))


def _normals(tris: np.ndarray) -> np.ndarray:
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def write_stl_binary(mesh: TriangleMesh, path) -> None:
    tris = mesh.triangles.astype(np.float32)
    normals = _normals(mesh.triangles).astype(np.float32)
    try:
        with open(path, "wb") as fh:
            fh.write(b"\x00" * 80)
            fh.write(struct.pack("<I", len(tris)))
            for n, t in zip(normals, tris):
                fh.write(_BIN_TRI.pack(*n, *t.ravel(), 0))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_stl_ascii(mesh: TriangleMesh, path, name: str = "mesh") -> None:
    normals = _normals(mesh.triangles)
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"solid {name}\n")
            for n, t in zip(normals, mesh.triangles):
                fh.write(f" facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
                fh.write("  outer loop\n")
                for v in t:
                    fh.write(f"   vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
                fh.write("  endloop\n")
                fh.write(" endfacet\n")
            fh.write(f"endsolid {name}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def fit_transform(mesh: TriangleMesh, dims, fill: float = 1.0):
    """Uniform scale + offset placing the mesh bbox centered in the grid."""
    lo, hi = mesh.bounds
    size = hi - lo
    if not (size > 0).any():
        raise InvalidConfig("mesh bounding box is degenerate")
    dims = np.asarray(dims, dtype=np.float64)
    scale = float((dims * fill / np.where(size > 0, size, 1.0)).min())
    offset = dims / 2.0 - scale * (lo + hi) / 2.0
    return scale, offset


def _axis_parity(tris: np.ndarray, dims, axis: int) -> np.ndarray:
    """Parity-inside along one cast axis; returns a bool volume."""
    order = [a for a in range(3) if a != axis] + [axis]
    u_ax, v_ax = order[0], order[1]
    nu, nv, na = dims[u_ax], dims[v_ax], dims[axis]

    pu = tris[:, :, u_ax]
    pv = tris[:, :, v_ax]
    pa = tris[:, :, axis]

    ray_ids: list[np.ndarray] = []
    cross_coords: list[np.ndarray] = []
    for ti in range(len(tris)):
        u0, u1, u2 = pu[ti]
        v0, v1, v2 = pv[ti]
        det = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if det == 0.0:
            continue
        iu_min = max(0, int(np.ceil(min(u0, u1, u2) - 0.5 - _JITTER_U)))
        iu_max = min(nu - 1, int(np.floor(max(u0, u1, u2) - 0.5 - _JITTER_U)))
        iv_min = max(0, int(np.ceil(min(v0, v1, v2) - 0.5 - _JITTER_V)))
        iv_max = min(nv - 1, int(np.floor(max(v0, v1, v2) - 0.5 - _JITTER_V)))
        if iu_min > iu_max or iv_min > iv_max:
            continue
        iu = np.arange(iu_min, iu_max + 1)
        iv = np.arange(iv_min, iv_max + 1)
        su = iu[:, None] + (0.5 + _JITTER_U)
        sv = iv[None, :] + (0.5 + _JITTER_V)
        w1 = ((su - u0) * (v2 - v0) - (u2 - u0) * (sv - v0)) / det
        w2 = ((u1 - u0) * (sv - v0) - (su - u0) * (v1 - v0)) / det
        inside = (w1 > 0.0) & (w2 > 0.0) & (w1 + w2 < 1.0)
        if not inside.any():
            continue
        a_cross = pa[ti, 0] + w1 * (pa[ti, 1] - pa[ti, 0]) + w2 * (pa[ti, 2] - pa[ti, 0])
        uu, vv = np.nonzero(inside)
        ray_ids.append((iu[uu] * nv + iv[vv]).astype(np.int64))
        cross_coords.append(a_cross[inside])

    inside_uv = np.zeros((nu, nv, na), dtype=bool)
    if ray_ids:
        rays = np.concatenate(ray_ids)
        coords = np.concatenate(cross_coords)
        order_idx = np.lexsort((coords, rays))
        rays, coords = rays[order_idx], coords[order_idx]
        centers = np.arange(na) + 0.5
        uniq = np.unique(rays)
        lo_idx = np.searchsorted(rays, uniq, side="left")
        hi_idx = np.searchsorted(rays, uniq, side="right")
        for rid, lo_i, hi_i in zip(uniq, lo_idx, hi_idx):
            c = coords[lo_i:hi_i]
            pos = np.searchsorted(c, centers, side="right")
            parity = ((hi_i - lo_i) - pos) % 2 == 1
            inside_uv[rid // nv, rid % nv] = parity

    return _unshuffle(inside_uv, u_ax, v_ax, axis)


def _unshuffle(inside_uv: np.ndarray, u_ax: int, v_ax: int, axis: int) -> np.ndarray:
    """Rearrange (u, v, a) data back to (x, y, z)."""
    return np.transpose(inside_uv, axes=np.argsort([u_ax, v_ax, axis]))


def voxelize(mesh: TriangleMesh, dims, transform=None, warn_threshold: float = 0.001) -> VoxelMask:
    """Rasterize a closed mesh into an inside/outside mask on ``dims``.

    ``transform`` is (scale, offset) mapping mesh to voxel coordinates
    (voxel centers sit at integer + 0.5); defaults to fitting the mesh into
    the grid. Emits NonWatertightWarning when the three axis rays disagree
    on more than ``warn_threshold`` of voxels (mask still returned).
    """
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise InvalidConfig(f"dims must be positive, got {dims}")
    if transform is None:
        transform = fit_transform(mesh, dims)
    scale, offset = transform
    tris = mesh.triangles * np.asarray(scale, dtype=np.float64) + np.asarray(
        offset, dtype=np.float64
    )

    votes = np.zeros(dims, dtype=np.int8)
    for axis in range(3):
        votes += _axis_parity(tris, dims, axis)
    disagree = (votes == 1) | (votes == 2)
    frac = float(disagree.mean())
    if frac > warn_threshold:
        warnings.warn(
            f"axis rays disagree on {frac:.2%} of voxels; mesh may not be watertight",
            NonWatertightWarning,
            stacklevel=2,
        )
    return VoxelMask((votes >= 2).astype(np.uint8), VolumeMeta(provenance="masked"))


def apply_mask(labels: LabelVolume, mask: VoxelMask, outside_label: int = 0) -> LabelVolume:
    """Set voxels outside the mask to ``outside_label``; inside unchanged."""
    if labels.dims != mask.dims:
        raise ShapeMismatch(f"labels {labels.dims} vs mask {mask.dims}")
    out = np.where(mask.data.astype(bool), labels.data, np.uint32(outside_label))
    meta = labels.meta.copy()
    meta.provenance = "masked"
    return LabelVolume(out, meta)
