"""Dense 3-D voxel volumes and window extraction/insertion.

Conventions used everywhere in this package:

* volumes are indexed ``data[x, y, z]``,
* the linear (serialized) order is row-major with x fastest, i.e.
  ``idx = x + nx * (y + ny * z)``,
* continuous volumes are float32, label volumes are uint32 with
  ``NOISE_LABEL`` (the maximum uint32) marking unassigned voxels,
* binary masks are uint8 with values in {0, 1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import InvalidDims, ShapeMismatch, WindowOutOfBounds

Dims = Tuple[int, int, int]

NOISE_LABEL = int(np.iinfo(np.uint32).max)

# Anything larger is almost certainly a unit error upstream.
_MAX_VOXELS = 2**38

_PROVENANCES = ("kmc", "diffusion", "masked")


def _check_dims(dims) -> Dims:
    if len(dims) != 3:
        raise InvalidDims(f"expected 3 dimensions, got {len(dims)}")
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise InvalidDims(f"all dimensions must be >= 1, got {dims}")
    if dims[0] * dims[1] * dims[2] > _MAX_VOXELS:
        raise InvalidDims(f"volume of {dims} voxels is unreasonably large")
    return dims


def linear_index(x: int, y: int, z: int, dims: Dims) -> int:
    """Map voxel coordinates to the x-fastest linear index."""
    nx, ny, nz = dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"site ({x}, {y}, {z}) outside volume {dims}")
    return x + nx * (y + ny * z)


def coords_from_linear(idx: int, dims: Dims) -> Tuple[int, int, int]:
    """Inverse of :func:`linear_index`."""
    nx, ny, nz = dims
    if not 0 <= idx < nx * ny * nz:
        raise IndexError(f"linear index {idx} outside volume {dims}")
    x = idx % nx
    y = (idx // nx) % ny
    z = idx // (nx * ny)
    return x, y, z


@dataclass
class VolumeMeta:
    """Provenance sidecar stored with every volume."""

    provenance: str = "kmc"
    seed: int = 0
    schema_version: int = 1
    pitch: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in _PROVENANCES:
            raise InvalidDims(
                f"provenance must be one of {_PROVENANCES}, got {self.provenance!r}"
            )
        self.seed = int(self.seed)
        if not 0 <= self.seed < 2**64:
            raise InvalidDims("seed must fit in an unsigned 64-bit integer")
        if self.schema_version != 1:
            raise InvalidDims(f"unsupported schema version {self.schema_version}")

    def copy(self) -> "VolumeMeta":
        return VolumeMeta(
            provenance=self.provenance,
            seed=self.seed,
            schema_version=self.schema_version,
            pitch=self.pitch,
            extra=dict(self.extra),
        )


@dataclass(frozen=True)
class BlockWindow:
    """Axis-aligned voxel window given by its low corner and size."""

    origin: Tuple[int, int, int]
    size: Tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(int(v) for v in self.origin))
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))
        if any(s < 1 for s in self.size):
            raise InvalidDims(f"window size must be positive, got {self.size}")

    def slices(self) -> Tuple[slice, slice, slice]:
        o, s = self.origin, self.size
        return tuple(slice(o[i], o[i] + s[i]) for i in range(3))

    def fits_within(self, dims: Dims) -> bool:
        return all(
            0 <= self.origin[i] and self.origin[i] + self.size[i] <= dims[i]
            for i in range(3)
        )

    def intersection_voxels(self, other: "BlockWindow") -> int:
        """Number of voxels shared with another window."""
        n = 1
        for i in range(3):
            lo = max(self.origin[i], other.origin[i])
            hi = min(self.origin[i] + self.size[i], other.origin[i] + other.size[i])
            if hi <= lo:
                return 0
            n *= hi - lo
        return n


class _BaseVolume:
    """Shared behavior of scalar and label volumes."""

    _dtype: np.dtype

    def __init__(self, data: np.ndarray, meta: VolumeMeta | None = None):
        data = np.asarray(data, dtype=self._dtype)
        if data.ndim != 3:
            raise InvalidDims(f"volume data must be 3-D, got {data.ndim}-D")
        self.dims: Dims = _check_dims(data.shape)
        self.data = data
        self.meta = meta if meta is not None else VolumeMeta()

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def ravel(self) -> np.ndarray:
        """Flat view/copy in the canonical x-fastest order."""
        return self.data.ravel(order="F")

    def copy(self):
        return type(self)(self.data.copy(), self.meta.copy())

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims}, provenance={self.meta.provenance!r})"


class ScalarVolume(_BaseVolume):
    """Dense float32 volume of continuous model values."""

    _dtype = np.dtype(np.float32)

    def assert_finite(self):
        if not np.isfinite(self.data).all():
            raise InvalidDims("scalar volume contains non-finite values")


class LabelVolume(_BaseVolume):
    """Dense uint32 volume of grain identifiers."""

    _dtype = np.dtype(np.uint32)

    def label_set(self) -> np.ndarray:
        """Distinct labels present, NOISE excluded."""
        labels = np.unique(self.data)
        return labels[labels != NOISE_LABEL]


class VoxelMask(_BaseVolume):
    """Dense uint8 mask; 1 marks voxels inside a shape or already generated."""

    _dtype = np.dtype(np.uint8)

    def __init__(self, data: np.ndarray, meta: VolumeMeta | None = None):
        super().__init__(data, meta)
        if not np.isin(self.data, (0, 1)).all():
            raise InvalidDims("mask values must be 0 or 1")

    def count(self) -> int:
        return int(self.data.sum())


AnyVolume = ScalarVolume | LabelVolume | VoxelMask


def create_volume(dims, fill_value: float, meta: VolumeMeta | None = None) -> ScalarVolume:
    """Allocate a constant-filled scalar volume."""
    dims = _check_dims(dims)
    fill = np.float32(fill_value)
    if not np.isfinite(fill):
        raise InvalidDims("fill value must be finite")
    data = np.full(dims, fill, dtype=np.float32)
    return ScalarVolume(data, meta)


def create_label_volume(dims, fill_label: int = 0, meta: VolumeMeta | None = None) -> LabelVolume:
    """Allocate a constant-filled label volume."""
    dims = _check_dims(dims)
    data = np.full(dims, np.uint32(fill_label), dtype=np.uint32)
    return LabelVolume(data, meta)


def extract_window(vol: AnyVolume, window: BlockWindow):
    """Copy the windowed voxels into a new volume of the window's size."""
    if not window.fits_within(vol.dims):
        raise WindowOutOfBounds(
            f"window origin={window.origin} size={window.size} "
            f"does not fit in volume {vol.dims}"
        )
    patch = vol.data[window.slices()].copy()
    return type(vol)(patch, vol.meta.copy())


def insert_window(vol: AnyVolume, window: BlockWindow, patch: AnyVolume) -> None:
    """Replace exactly the windowed voxels with ``patch``, in place."""
    if patch.dims != window.size:
        raise ShapeMismatch(
            f"patch dims {patch.dims} do not match window size {window.size}"
        )
    if not window.fits_within(vol.dims):
        raise WindowOutOfBounds(
            f"window origin={window.origin} size={window.size} "
            f"does not fit in volume {vol.dims}"
        )
    if patch.data.dtype != vol.data.dtype:
        raise ShapeMismatch(
            f"patch dtype {patch.data.dtype} does not match volume {vol.data.dtype}"
        )
    vol.data[window.slices()] = patch.data
