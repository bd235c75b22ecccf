"""Per-grain descriptors and distribution comparison between volume sets.

Axis lengths (a >= b >= c) are the singular values of the grain's centered
(n x 3) voxel-coordinate matrix divided by sqrt(n), i.e. RMS semi-axes; a
single-voxel grain has axes (0, 0, 0). Aspect ratios live in the
(b/a, c/a) plane. Histograms are per-bin probability masses with optional
epsilon smoothing so KL divergences stay finite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyInput, InsufficientGrains, InvalidConfig, IoError, ShapeMismatch
from .volume import NOISE_LABEL, LabelVolume


@dataclass
class GrainRecord:
    id: int
    volume: int
    centroid: tuple[float, float, float]
    axes: tuple[float, float, float]  # a >= b >= c


def relabel_components(labels: LabelVolume, connectivity: int = 1) -> LabelVolume:
    """Split every label into connected components with unique ids.

    Potts simulations reuse each spin value for many disconnected grains;
    descriptor statistics need one id per grain, as segmentation output and
    grain-growth datasets with unique ids already provide. NOISE is kept.
    Runs as one union pass over same-label adjacencies, so the cost does not
    scale with the number of distinct labels.
    """
    arr = labels.data
    n = arr.size
    flat = arr.ravel(order="F")
    idx = np.arange(n, dtype=np.int64).reshape(arr.shape, order="F")
    structure = ndimage.generate_binary_structure(3, connectivity)
    offsets = np.argwhere(structure) - 1

    def pair_slices(d: int):
        if d >= 0:
            return slice(None, -d or None), slice(d, None)
        return slice(-d, None), slice(None, d)

    rows, cols = [], []
    for off in offsets:
        if tuple(off) <= (0, 0, 0):  # each unordered pair once
            continue
        per_axis = [pair_slices(int(d)) for d in off]
        src = tuple(p[0] for p in per_axis)
        dst = tuple(p[1] for p in per_axis)
        same = (arr[src] == arr[dst]) & (arr[src] != NOISE_LABEL)
        rows.append(idx[src][same])
        cols.append(idx[dst][same])
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = cols = np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)

    # canonicalize by first voxel in scan order; noise keeps its sentinel
    out = np.full(n, NOISE_LABEL, dtype=np.uint32)
    assigned = flat != NOISE_LABEL
    comp_ids, first = np.unique(comp[assigned], return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(comp_ids.max() + 1 if comp_ids.size else 0, dtype=np.uint32)
    remap[comp_ids[order]] = np.arange(comp_ids.size, dtype=np.uint32)
    out[assigned] = remap[comp[assigned]]
    return LabelVolume(out.reshape(arr.shape, order="F"), labels.meta.copy())


def grain_records(labels: LabelVolume, exclude_boundary: bool = False) -> list[GrainRecord]:
    """One record per non-NOISE label."""
    arr = labels.data
    flat = arr.ravel(order="F")
    coords = None

    ids, inverse = np.unique(flat, return_inverse=True)
    keep = ids != NOISE_LABEL
    if exclude_boundary:
        boundary = np.zeros(arr.shape, dtype=bool)
        boundary[0, :, :] = boundary[-1, :, :] = True
        boundary[:, 0, :] = boundary[:, -1, :] = True
        boundary[:, :, 0] = boundary[:, :, -1] = True
        touching = np.unique(arr[boundary])
        keep &= ~np.isin(ids, touching)

    nx, ny, nz = arr.shape
    idx = np.arange(flat.size, dtype=np.int64)
    coords = np.column_stack((idx % nx, (idx // nx) % ny, idx // (nx * ny))).astype(
        np.float64
    )

    records: list[GrainRecord] = []
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(ids.size + 1))
    for gi in range(ids.size):
        if not keep[gi]:
            continue
        sel = order[bounds[gi] : bounds[gi + 1]]
        pts = coords[sel]
        centroid = pts.mean(axis=0)
        centered = pts - centroid
        cov = centered.T @ centered / len(pts)
        eig = np.linalg.eigvalsh(cov)
        axes = np.sqrt(np.maximum(eig, 0.0))[::-1]
        records.append(
            GrainRecord(
                id=int(ids[gi]),
                volume=int(len(pts)),
                centroid=tuple(centroid),
                axes=tuple(axes),
            )
        )
    return records


def nn_centroid_distances(records: list[GrainRecord]) -> np.ndarray:
    """Euclidean distance from each grain's centroid to the nearest other."""
    if len(records) < 2:
        raise InsufficientGrains(f"need >= 2 grains, got {len(records)}")
    pts = np.array([r.centroid for r in records])
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    return dist[:, 1]


@dataclass
class Histogram:
    edges: np.ndarray
    densities: np.ndarray
    epsilon: float = 0.0


@dataclass
class Histogram2D:
    edges_x: np.ndarray
    edges_y: np.ndarray
    densities: np.ndarray  # shape (len(edges_x)-1, len(edges_y)-1)
    epsilon: float = 0.0


def _check_edges(edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2:
        raise InvalidConfig("need at least 2 bin edges")
    if not (np.diff(edges) > 0).all():
        raise InvalidConfig("bin edges must be strictly increasing")
    return edges


def histogram_pdf(values, edges, epsilon: float = 0.0) -> Histogram:
    """Probability-mass histogram; bins are right-open except the last, and
    out-of-range values are clipped into the end bins."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("no values to bin")
    edges = _check_edges(edges)
    clipped = np.clip(values, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    masses = counts.astype(np.float64) + epsilon
    masses /= masses.sum()
    return Histogram(edges=edges, densities=masses, epsilon=epsilon)


def histogram2d_pdf(values_x, values_y, edges_x, edges_y, epsilon: float = 0.0) -> Histogram2D:
    vx = np.asarray(values_x, dtype=np.float64).ravel()
    vy = np.asarray(values_y, dtype=np.float64).ravel()
    if vx.size == 0 or vx.size != vy.size:
        raise EmptyInput("need equal-length, non-empty coordinate arrays")
    ex, ey = _check_edges(edges_x), _check_edges(edges_y)
    cx = np.clip(vx, ex[0], ex[-1])
    cy = np.clip(vy, ey[0], ey[-1])
    counts, _, _ = np.histogram2d(cx, cy, bins=(ex, ey))
    masses = counts + epsilon
    masses /= masses.sum()
    return Histogram2D(edges_x=ex, edges_y=ey, densities=masses, epsilon=epsilon)


def kl_divergence(p, q) -> float:
    """sum p_i ln(p_i / q_i) with 0 ln 0 = 0; histograms must share edges."""
    if isinstance(p, Histogram) != isinstance(q, Histogram):
        raise ShapeMismatch("cannot compare 1-D and 2-D histograms")
    if isinstance(p, Histogram):
        if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
            raise ShapeMismatch("histograms have different bin edges")
    else:
        if (
            not np.array_equal(p.edges_x, q.edges_x)
            or not np.array_equal(p.edges_y, q.edges_y)
        ):
            raise ShapeMismatch("histograms have different bin edges")
    pm = np.asarray(p.densities, dtype=np.float64).ravel()
    qm = np.asarray(q.densities, dtype=np.float64).ravel()
    active = pm > 0
    if (qm[active] <= 0).any():
        raise InvalidConfig("q has zero mass where p > 0; use epsilon smoothing")
    return float(np.sum(pm[active] * np.log(pm[active] / qm[active])))


@dataclass
class CompareConfig:
    bins: int = 50
    aspect_bins: int = 16  # 2-D histogram: 50x50 would leave most cells empty
    epsilon: float = 1e-10
    exclude_boundary: bool = False


@dataclass
class DescriptorSet:
    """Pooled descriptor values for one set of volumes."""

    volumes: np.ndarray
    aspect_ba: np.ndarray
    aspect_ca: np.ndarray
    nn_distances: np.ndarray
    grain_count: int = 0


def pool_descriptors(volume_set: list[LabelVolume], exclude_boundary: bool = False) -> DescriptorSet:
    """Per-grain descriptors pooled across all volumes of a set.

    Aspect ratios skip degenerate grains with a == 0; nearest-centroid
    distances are computed within each volume, then pooled.
    """
    if not volume_set:
        raise EmptyInput("volume set is empty")
    vols, ba, ca, nn = [], [], [], []
    total = 0
    for labels in volume_set:
        records = grain_records(labels, exclude_boundary=exclude_boundary)
        total += len(records)
        vols.extend(r.volume for r in records)
        for r in records:
            a, b, c = r.axes
            if a > 0:
                ba.append(b / a)
                ca.append(c / a)
        if len(records) >= 2:
            nn.extend(nn_centroid_distances(records))
    if total == 0:
        raise EmptyInput("no grains found in volume set")
    return DescriptorSet(
        volumes=np.array(vols, dtype=np.float64),
        aspect_ba=np.array(ba, dtype=np.float64),
        aspect_ca=np.array(ca, dtype=np.float64),
        nn_distances=np.array(nn, dtype=np.float64),
        grain_count=total,
    )


def _shared_edges(a: np.ndarray, b: np.ndarray, bins: int) -> np.ndarray:
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def compare_sets(
    set_a: list[LabelVolume],
    set_b: list[LabelVolume],
    config: CompareConfig | None = None,
) -> dict:
    """KL divergences (A against B) of the three grain descriptors, with the
    underlying histograms; bin edges are shared and span the pooled range."""
    config = config or CompareConfig()
    da = pool_descriptors(set_a, config.exclude_boundary)
    db = pool_descriptors(set_b, config.exclude_boundary)

    report: dict = {
        "config": {"bins": config.bins, "epsilon": config.epsilon},
        "grains_a": da.grain_count,
        "grains_b": db.grain_count,
        "kld": {},
        "histograms": {},
    }

    vol_edges = _shared_edges(da.volumes, db.volumes, config.bins)
    pa = histogram_pdf(da.volumes, vol_edges, config.epsilon)
    pb = histogram_pdf(db.volumes, vol_edges, config.epsilon)
    report["kld"]["grain_volume"] = kl_divergence(pa, pb)
    report["histograms"]["grain_volume"] = {
        "edges": vol_edges.tolist(),
        "a": pa.densities.tolist(),
        "b": pb.densities.tolist(),
    }

    unit = np.linspace(0.0, 1.0, config.aspect_bins + 1)
    ha = histogram2d_pdf(da.aspect_ba, da.aspect_ca, unit, unit, config.epsilon)
    hb = histogram2d_pdf(db.aspect_ba, db.aspect_ca, unit, unit, config.epsilon)
    report["kld"]["aspect_ratio"] = kl_divergence(ha, hb)
    report["histograms"]["aspect_ratio"] = {
        "edges_ba": unit.tolist(),
        "edges_ca": unit.tolist(),
        "a": ha.densities.tolist(),
        "b": hb.densities.tolist(),
    }

    if da.nn_distances.size and db.nn_distances.size:
        nn_edges = _shared_edges(da.nn_distances, db.nn_distances, config.bins)
        na = histogram_pdf(da.nn_distances, nn_edges, config.epsilon)
        nb = histogram_pdf(db.nn_distances, nn_edges, config.epsilon)
        report["kld"]["centroid_distance"] = kl_divergence(na, nb)
        report["histograms"]["centroid_distance"] = {
            "edges": nn_edges.tolist(),
            "a": na.densities.tolist(),
            "b": nb.densities.tolist(),
        }
    return report


def write_report(report: dict, json_path, csv_path=None) -> None:
    """Serialize a comparison report as JSON plus plot-ready CSV."""
    try:
        Path(json_path).write_text(json.dumps(report, indent=1))
    except OSError as exc:
        raise IoError(f"cannot write {json_path}: {exc}") from exc
    if csv_path is None:
        return
    try:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["descriptor", "bin_low", "bin_high", "mass_a", "mass_b"])
            for name, h in report["histograms"].items():
                if "edges" not in h:
                    continue
                edges = h["edges"]
                for i in range(len(edges) - 1):
                    writer.writerow([name, edges[i], edges[i + 1], h["a"][i], h["b"][i]])
    except OSError as exc:
        raise IoError(f"cannot write {csv_path}: {exc}") from exc
