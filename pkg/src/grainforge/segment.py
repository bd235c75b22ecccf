"""Grain segmentation: DBSCAN over 4-D points (x, y, z, scaled value).

The spatial coordinates are voxel indices, so for eps < 2 the reachable
neighbors of a voxel all lie in its 27-cell neighborhood; the neighbor
search exploits that instead of a generic spatial index, but the result
equals the textbook O(n^2) definition (the test suite checks this against a
brute-force oracle).

Determinism: clusters are seeded in linear-index scan order, expansion
claims neighbors in ascending index order, and final labels are
renumbered by first-voxel scan order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import dbscan_expand
from .errors import EmptyInput, InvalidConfig, NoClusters
from .volume import NOISE_LABEL, LabelVolume, ScalarVolume, VolumeMeta


@dataclass
class DbscanParams:
    """eps is a 4-D Euclidean radius; the value channel is multiplied by
    ``value_gain`` before distances are computed."""

    eps: float = 1.9
    min_samples: int = 15
    value_gain: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidConfig(f"eps must be positive, got {self.eps}")
        if self.min_samples < 1:
            raise InvalidConfig(f"min_samples must be >= 1, got {self.min_samples}")
        if self.value_gain <= 0:
            raise InvalidConfig(f"value_gain must be positive, got {self.value_gain}")


@dataclass
class SegmentationResult:
    labels: LabelVolume
    noise_count: int
    cluster_count: int


def _spatial_offsets(eps: float):
    """Nonzero integer offsets with squared spatial distance <= eps^2,
    sorted so that linear-index deltas come out ascending for any dims."""
    r = int(math.floor(eps))
    offs = []
    for dz, dy, dx in itertools.product(range(-r, r + 1), repeat=3):
        if (dx, dy, dz) == (0, 0, 0):
            continue
        d2 = dx * dx + dy * dy + dz * dz
        if d2 <= eps * eps:
            offs.append((dz, dy, dx, d2))
    offs.sort()
    doff = np.array([(dx, dy, dz) for dz, dy, dx, _ in offs], dtype=np.int32)
    d2 = np.array([d for _, _, _, d in offs], dtype=np.float64)
    return doff, d2


def _core_mask(values: np.ndarray, params: DbscanParams) -> np.ndarray:
    """Points with >= min_samples 4-D neighbors within eps, self included."""
    doff, d2 = _spatial_offsets(params.eps)
    eps2 = params.eps * params.eps
    gain = params.value_gain
    count = np.ones(values.shape, dtype=np.int32)  # self
    nx, ny, nz = values.shape

    def axis_slices(d: int, n: int):
        if d >= 0:
            return slice(0, n - d), slice(d, n)
        return slice(-d, n), slice(0, n + d)

    for (dx, dy, dz), dist2 in zip(doff, d2):
        if abs(dx) >= nx or abs(dy) >= ny or abs(dz) >= nz:
            continue
        qx, rx = axis_slices(int(dx), nx)
        qy, ry = axis_slices(int(dy), ny)
        qz, rz = axis_slices(int(dz), nz)
        dv = gain * (
            values[qx, qy, qz].astype(np.float64) - values[rx, ry, rz].astype(np.float64)
        )
        within = dist2 + dv * dv <= eps2
        count[qx, qy, qz] += within
    return count >= params.min_samples


def _expand(values: np.ndarray, core: np.ndarray, params: DbscanParams):
    """Run the expansion kernel; returns (labels_flat int32 with -1 noise,
    cluster count before canonicalization)."""
    dims = values.shape
    doff, d2 = _spatial_offsets(params.eps)
    nx, ny = dims[0], dims[1]
    deltas = (doff[:, 0] + nx * (doff[:, 1] + ny * doff[:, 2])).astype(np.int32)
    flat_values = np.ascontiguousarray(values.ravel(order="F"), dtype=np.float32)
    flat_core = np.ascontiguousarray(core.ravel(order="F"), dtype=np.uint8)
    labels = np.full(flat_values.size, -1, dtype=np.int32)
    n_clusters = dbscan_expand(
        flat_values,
        flat_core,
        labels,
        tuple(dims),
        deltas,
        np.ascontiguousarray(doff),
        d2,
        float(params.eps) ** 2,
        float(params.value_gain),
    )
    return labels, n_clusters


def _canonicalize(labels_flat: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber clusters 0..K-1 by first-voxel scan order; noise -> NOISE."""
    ids, first = np.unique(labels_flat, return_index=True)
    keep = ids >= 0
    ids, first = ids[keep], first[keep]
    order = np.argsort(first, kind="stable")
    remap = np.empty(ids.size and ids.max() + 1 or 0, dtype=np.uint32)
    for rank, cid in enumerate(ids[order]):
        remap[cid] = rank
    out = np.full(labels_flat.size, NOISE_LABEL, dtype=np.uint32)
    mask = labels_flat >= 0
    out[mask] = remap[labels_flat[mask]]
    return out, int(ids.size)


def dbscan4d(volume: ScalarVolume, params: DbscanParams | None = None) -> SegmentationResult:
    """Single-pass DBSCAN over the whole volume."""
    params = params or DbscanParams()
    values = volume.data
    if values.size == 0:
        raise EmptyInput("empty volume")
    core = _core_mask(values, params)
    labels_flat, _ = _expand(values, core, params)
    canon, n_clusters = _canonicalize(labels_flat)
    noise = int((canon == NOISE_LABEL).sum())
    meta = VolumeMeta(provenance="diffusion", seed=volume.meta.seed)
    labels = LabelVolume(canon.reshape(values.shape, order="F"), meta)
    return SegmentationResult(labels=labels, noise_count=noise, cluster_count=n_clusters)


def _tile_starts(dim: int, tile: int, step: int) -> list[int]:
    if dim <= tile:
        return [0]
    starts = list(range(0, dim - tile, step))
    starts.append(dim - tile)
    return sorted(set(starts))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def hierarchical_segment(
    volume: ScalarVolume,
    tile_size: int = 32,
    overlap: int = 8,
    params: DbscanParams | None = None,
) -> SegmentationResult:
    """Per-tile DBSCAN merged with union-find over shared overlap voxels.

    Clusters from two tiles merge when they share a voxel that is core and
    whose full eps-ball is visible to both tiles (so both made the same,
    untruncated decision there). Each voxel's final label comes from the
    tile that owns it; ownership splits each overlap down the middle.
    """
    params = params or DbscanParams()
    if tile_size <= 2 * overlap:
        raise InvalidConfig(
            f"need tile_size > 2*overlap, got tile={tile_size} overlap={overlap}"
        )
    r_sp = int(math.floor(params.eps))
    if overlap < 2 * r_sp:
        raise InvalidConfig(
            f"overlap {overlap} too small for eps {params.eps} (need >= {2 * r_sp})"
        )
    dims = volume.dims
    if all(d <= tile_size for d in dims):
        return dbscan4d(volume, params)

    step = tile_size - overlap
    starts = [_tile_starts(dims[a], tile_size, step) for a in range(3)]
    tile_boxes = []
    for sx in starts[0]:
        for sy in starts[1]:
            for sz in starts[2]:
                lo = (sx, sy, sz)
                hi = tuple(min(lo[a] + tile_size, dims[a]) for a in range(3))
                tile_boxes.append((lo, hi))

    # Per-tile local clustering.
    tile_labels = []
    tile_core = []
    tile_base = []
    total = 0
    for lo, hi in tile_boxes:
        sub = volume.data[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        core = _core_mask(sub, params)
        labels_flat, ncl = _expand(sub, core, params)
        tile_labels.append(labels_flat.reshape(sub.shape, order="F"))
        tile_core.append(core)
        tile_base.append(total)
        total += ncl

    def trust_mask(lo, hi):
        """Voxels whose eps-ball the tile sees exactly as the full volume."""
        shape = tuple(hi[a] - lo[a] for a in range(3))
        m = np.ones(shape, dtype=bool)
        for a in range(3):
            coords = np.arange(lo[a], hi[a])
            ok = np.ones(len(coords), dtype=bool)
            if lo[a] > 0:
                ok &= coords - r_sp >= lo[a]
            if hi[a] < dims[a]:
                ok &= coords + r_sp <= hi[a] - 1
            sl = [None, None, None]
            sl[a] = slice(None)
            m &= ok[tuple(sl)]
        return m

    uf = _UnionFind(total)
    for ta in range(len(tile_boxes)):
        lo_a, hi_a = tile_boxes[ta]
        trust_a = trust_mask(lo_a, hi_a)
        for tb in range(ta + 1, len(tile_boxes)):
            lo_b, hi_b = tile_boxes[tb]
            lo = tuple(max(lo_a[a], lo_b[a]) for a in range(3))
            hi = tuple(min(hi_a[a], hi_b[a]) for a in range(3))
            if any(hi[a] <= lo[a] for a in range(3)):
                continue

            def box(arr, tlo):
                return arr[
                    lo[0] - tlo[0] : hi[0] - tlo[0],
                    lo[1] - tlo[1] : hi[1] - tlo[1],
                    lo[2] - tlo[2] : hi[2] - tlo[2],
                ]

            la = box(tile_labels[ta], lo_a)
            lb = box(tile_labels[tb], lo_b)
            sel = (
                box(trust_a, lo_a)
                & box(trust_mask(lo_b, hi_b), lo_b)
                & box(tile_core[ta], lo_a)
                & (la >= 0)
                & (lb >= 0)
            )
            if not sel.any():
                continue
            pairs = np.unique(
                np.stack([la[sel] + tile_base[ta], lb[sel] + tile_base[tb]], axis=1),
                axis=0,
            )
            for a, b in pairs:
                uf.union(int(a), int(b))

    # Assemble from each tile's owned region.
    def cuts(ax: int) -> list[int]:
        s = starts[ax]
        edges = [0]
        for k in range(len(s) - 1):
            edges.append((s[k + 1] + min(s[k] + tile_size, dims[ax])) // 2)
        edges.append(dims[ax])
        return edges

    own_edges = [cuts(a) for a in range(3)]
    roots = np.array([uf.find(i) for i in range(total)], dtype=np.int64)
    assembled = np.full(dims, -1, dtype=np.int64)
    ti = 0
    for ix in range(len(starts[0])):
        for iy in range(len(starts[1])):
            for iz in range(len(starts[2])):
                lo, hi = tile_boxes[ti]
                olo = (own_edges[0][ix], own_edges[1][iy], own_edges[2][iz])
                ohi = (own_edges[0][ix + 1], own_edges[1][iy + 1], own_edges[2][iz + 1])
                local = tile_labels[ti][
                    olo[0] - lo[0] : ohi[0] - lo[0],
                    olo[1] - lo[1] : ohi[1] - lo[1],
                    olo[2] - lo[2] : ohi[2] - lo[2],
                ]
                mapped = np.full(local.shape, -1, dtype=np.int64)
                clustered = local >= 0
                mapped[clustered] = roots[local[clustered] + tile_base[ti]]
                assembled[olo[0] : ohi[0], olo[1] : ohi[1], olo[2] : ohi[2]] = mapped
                ti += 1

    canon, n_clusters = _canonicalize(assembled.ravel(order="F"))
    noise = int((canon == NOISE_LABEL).sum())
    meta = VolumeMeta(provenance="diffusion", seed=volume.meta.seed)
    labels = LabelVolume(canon.reshape(dims, order="F"), meta)
    return SegmentationResult(labels=labels, noise_count=noise, cluster_count=n_clusters)


def assign_noise(result: SegmentationResult, policy: str = "nearest_cluster") -> LabelVolume:
    """Resolve NOISE voxels: keep them, or adopt the nearest cluster's label
    (3-D Euclidean; exact ties go to the smallest label)."""
    if policy not in ("keep_noise", "nearest_cluster"):
        raise InvalidConfig(f"unknown policy {policy!r}")
    labels = result.labels.copy()
    if policy == "keep_noise":
        return labels
    arr = labels.data
    noise = arr == NOISE_LABEL
    if not noise.any():
        return labels
    if noise.all():
        raise NoClusters("cannot assign noise: volume has no clusters")

    assigned_coords = np.argwhere(~noise)
    tree = cKDTree(assigned_coords)
    noise_coords = np.argwhere(noise)
    dist, _ = tree.query(noise_coords, k=1)
    balls = tree.query_ball_point(noise_coords, dist + 1e-6)
    out = arr.copy()
    for p, ball in zip(noise_coords, balls):
        cand = assigned_coords[ball]
        d2 = ((cand - p) ** 2).sum(axis=1)
        best = d2 == d2.min()
        labels_here = arr[tuple(cand[best].T)]
        out[tuple(p)] = labels_here.min()
    return LabelVolume(out, labels.meta)
