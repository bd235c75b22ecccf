"""Training patches from grain-growth label volumes.

Labels are mapped to continuous values in [-1, 1] by id / max_id * 2 - 1;
max_id is recorded per dataset so the mapping stays invertible and the
segmentation value gain can be chosen consistently downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gvox import read_gvox

PATCH = 32


@dataclass
class PatchDataset:
    patches: np.ndarray  # (n, 32, 32, 32) float32 in [-1, 1]
    max_id: int

    def __len__(self) -> int:
        return len(self.patches)


def normalize(ids: np.ndarray, max_id: int) -> np.ndarray:
    return (ids.astype(np.float64) / max_id * 2.0 - 1.0).astype(np.float32)


def denormalize(values: np.ndarray, max_id: int) -> np.ndarray:
    ids = np.rint((values.astype(np.float64) + 1.0) / 2.0 * max_id)
    return np.clip(ids, 0, max_id).astype(np.uint32)


def _isotropic_origins(dim: int) -> tuple[list[int], list[int]]:
    """Base origins of the non-overlapping 3x3x3 blocks plus the midpoints
    between adjacent base origins."""
    c = (dim - PATCH) // 2
    base = [0, c, 2 * c]
    mids = [c // 2, c + c // 2]
    return base, mids


def isotropic_block_origins(dims) -> list[tuple[int, int, int]]:
    """27 non-overlapping blocks plus 56 boundary-straddling blocks.

    The extra blocks mix midpoint origins with base origins (at least one
    midpoint axis); the first 56 in lexicographic order are used.
    """
    if min(dims) < 3 * PATCH:
        raise ValueError(f"volume {dims} too small for the 27+56 scheme")
    per_axis = [_isotropic_origins(d) for d in dims]
    blocks = [
        (x, y, z)
        for x in per_axis[0][0]
        for y in per_axis[1][0]
        for z in per_axis[2][0]
    ]
    extras = sorted(
        (x, y, z)
        for x in per_axis[0][0] + per_axis[0][1]
        for y in per_axis[1][0] + per_axis[1][1]
        for z in per_axis[2][0] + per_axis[2][1]
        if (x, y, z) not in set(blocks)
    )
    return blocks + extras[:56]


def extract_patches(volume_dir, scheme: str = "isotropic", n_random: int = 40,
                    seed: int = 0) -> PatchDataset:
    """Cut 32^3 training patches from every .gvox volume in a directory.

    ``isotropic``: 27 non-overlapping + 56 overlapping blocks per volume
    (needs >= 96 voxels per axis). ``random``: ``n_random`` cubes at uniform
    random positions per volume.
    """
    paths = sorted(Path(volume_dir).glob("*.gvox"))
    if not paths:
        raise ValueError(f"no .gvox volumes in {volume_dir}")
    volumes = []
    max_id = 0
    for p in paths:
        data, _meta = read_gvox(p)
        if data.dtype != np.uint32:
            raise ValueError(f"{p}: expected a label volume")
        if min(data.shape) < PATCH:
            raise ValueError(f"{p}: volume {data.shape} smaller than a patch")
        volumes.append(data)
        max_id = max(max_id, int(data.max()))
    if max_id < 1:
        raise ValueError("volumes contain a single label; nothing to learn")

    rng = np.random.default_rng(seed)
    cut = []
    for data in volumes:
        dims = data.shape
        if scheme == "isotropic":
            origins = isotropic_block_origins(dims)
        elif scheme == "random":
            origins = [
                tuple(int(rng.integers(0, d - PATCH + 1)) for d in dims)
                for _ in range(n_random)
            ]
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        for ox, oy, oz in origins:
            cut.append(data[ox : ox + PATCH, oy : oy + PATCH, oz : oz + PATCH])
    patches = normalize(np.stack(cut), max_id)
    return PatchDataset(patches=patches, max_id=max_id)
