"""Potts-model kinetic Monte Carlo for curvature-driven grain growth.

Each voxel holds an integer spin in ``[0, Q)``. The boundary energy of a
site is the number of neighbors with a different spin; a sweep visits every
site in a random permutation, proposes the spin of a uniformly random
neighbor, and accepts with the Metropolis probability

    P = M(x)                          if dE <= 0
    P = M(x) * exp(-dE / T_s)         if dE >  0

where ``M`` is an optional position-dependent mobility in [0, 1] (1 when no
mobility field is supplied) and ``k_B`` is folded into ``T_s``.

``dE`` is the local change in boundary energy with each dissimilar pair
counted once, so the incrementally tracked total equals half the full
site-energy summation exactly (integers throughout).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._kernels import kmc_sweep
from .errors import InvalidConfig, IoError
from .gvox import write_gvox
from .volume import Dims, LabelVolume, VolumeMeta

NEIGHBORHOODS = ("moore26", "vonneumann6")
BOUNDARIES = ("periodic", "fixed")


@dataclass
class PottsConfig:
    """Simulation knobs; temperature is in energy units (k_B = 1)."""

    q: int = 64
    temperature: float = 0.5
    neighborhood: str = "moore26"
    boundary: str = "periodic"
    seed: int = 0

    def __post_init__(self):
        if self.q < 2:
            raise InvalidConfig(f"q must be >= 2, got {self.q}")
        if self.temperature < 0:
            raise InvalidConfig(f"temperature must be >= 0, got {self.temperature}")
        if self.neighborhood not in NEIGHBORHOODS:
            raise InvalidConfig(f"unknown neighborhood {self.neighborhood!r}")
        if self.boundary not in BOUNDARIES:
            raise InvalidConfig(f"unknown boundary {self.boundary!r}")

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "temperature": self.temperature,
            "neighborhood": self.neighborhood,
            "boundary": self.boundary,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PottsConfig":
        return cls(**doc)


@dataclass
class SimState:
    """Mutable simulation state; labels are stored F-ordered so the flat
    x-fastest view aliases the same memory the kernels mutate."""

    labels: LabelVolume
    sweeps: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    energy: int | None = None

    def __post_init__(self):
        if not self.labels.data.flags.f_contiguous:
            self.labels.data = np.asfortranarray(self.labels.data)

    @property
    def labels_flat(self) -> np.ndarray:
        # F-contiguity is enforced above, so this is a mutable view
        return self.labels.data.ravel(order="F")


def neighborhood_offsets(neighborhood: str) -> np.ndarray:
    """(K, 3) integer offsets in a fixed, documented order."""
    if neighborhood == "vonneumann6":
        offs = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
    elif neighborhood == "moore26":
        offs = [
            o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)
        ]
    else:
        raise InvalidConfig(f"unknown neighborhood {neighborhood!r}")
    return np.array(sorted(offs), dtype=np.int64)


@lru_cache(maxsize=4)
def _neighbor_table(dims: Dims, neighborhood: str, boundary: str):
    """(n, K) table of neighbor linear indices plus per-site valid counts.

    With fixed boundaries, valid neighbors are packed to the front of each
    row preserving the offset order. Cached: tables are pure functions of
    the arguments and large enough to be worth reuse.
    """
    nx, ny, nz = dims
    n = nx * ny * nz
    offsets = neighborhood_offsets(neighborhood)
    k = len(offsets)

    idx = np.arange(n, dtype=np.int64)
    x = idx % nx
    y = (idx // nx) % ny
    z = idx // (nx * ny)

    tbl = np.empty((n, k), dtype=np.int32)
    valid = np.empty((n, k), dtype=bool)
    for col, (dx, dy, dz) in enumerate(offsets):
        xx, yy, zz = x + dx, y + dy, z + dz
        if boundary == "periodic":
            valid[:, col] = True
        else:
            valid[:, col] = (
                (xx >= 0) & (xx < nx) & (yy >= 0) & (yy < ny) & (zz >= 0) & (zz < nz)
            )
        tbl[:, col] = (xx % nx) + nx * ((yy % ny) + ny * (zz % nz))

    if boundary == "periodic":
        cnt = np.full(n, k, dtype=np.uint8)
    else:
        order = np.argsort(~valid, axis=1, kind="stable")
        tbl = np.take_along_axis(tbl, order, axis=1)
        cnt = valid.sum(axis=1).astype(np.uint8)
    return np.ascontiguousarray(tbl), cnt


def init_random_spins(dims, q: int, seed: int, config: PottsConfig | None = None) -> SimState:
    """I.i.d. uniform spins over [0, q); deterministic for a fixed seed."""
    if q < 2:
        raise InvalidConfig(f"q must be >= 2, got {q}")
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    n = dims[0] * dims[1] * dims[2]
    flat = rng.integers(0, q, size=n, dtype=np.uint32)
    data = flat.reshape(dims, order="F")
    meta = VolumeMeta(provenance="kmc", seed=seed, extra={"q": q})
    return SimState(labels=LabelVolume(data, meta), sweeps=0, rng=rng)


def site_energy(state: SimState, site, config: PottsConfig) -> int:
    """Number of neighbors of ``site`` holding a different spin."""
    from .volume import linear_index

    dims = state.labels.dims
    s = linear_index(site[0], site[1], site[2], dims)
    tbl, cnt = _neighbor_table(dims, config.neighborhood, config.boundary)
    flat = state.labels_flat
    row = tbl[s, : cnt[s]]
    return int(np.count_nonzero(flat[row] != flat[s]))


def boundary_energy(state: SimState, config: PottsConfig) -> int:
    """Total boundary energy with each dissimilar pair counted once."""
    dims = state.labels.dims
    tbl, cnt = _neighbor_table(dims, config.neighborhood, config.boundary)
    flat = state.labels_flat
    diff = flat[tbl] != flat[:, None]
    if config.boundary == "fixed":
        diff &= np.arange(tbl.shape[1])[None, :] < cnt[:, None]
    total = int(diff.sum())
    return total // 2


def accept_probability(delta_e: float, temperature: float, mobility: float = 1.0) -> float:
    """Metropolis acceptance probability, optionally gated by mobility."""
    if delta_e <= 0:
        p = 1.0
    elif temperature > 0.0:
        p = float(np.exp(-delta_e / temperature))
    else:
        p = 0.0
    return p * mobility


def _mobility_grid(mobility, dims) -> np.ndarray:
    """Flat float32 mobility values in x-fastest order."""
    if mobility is None:
        return np.ones(dims[0] * dims[1] * dims[2], dtype=np.float32)
    if isinstance(mobility, MobilityField):
        return mobility.mobility_grid(dims).ravel(order="F").astype(np.float32)
    arr = np.asarray(mobility, dtype=np.float32)
    if arr.shape == tuple(dims):
        return np.ascontiguousarray(arr.ravel(order="F"))
    if arr.shape == (dims[0] * dims[1] * dims[2],):
        return np.ascontiguousarray(arr)
    raise InvalidConfig(f"mobility shape {arr.shape} does not match dims {dims}")


def metropolis_sweep(state: SimState, config: PottsConfig, mobility=None) -> int:
    """One Metropolis sweep over all sites; returns the number of accepted
    spin changes and updates the incrementally tracked boundary energy."""
    dims = state.labels.dims
    n = state.labels.n_voxels
    tbl, cnt = _neighbor_table(dims, config.neighborhood, config.boundary)
    if state.energy is None:
        state.energy = boundary_energy(state, config)
    mob = _mobility_grid(mobility, dims)

    perm = state.rng.permutation(n).astype(np.int64, copy=False)
    u_choice = state.rng.random(n)
    u_accept = state.rng.random(n)

    accepted, de_sum = kmc_sweep(
        state.labels_flat, tbl, cnt, perm, u_choice, u_accept, mob, float(config.temperature)
    )
    state.energy += de_sum
    state.sweeps += 1
    return accepted


@dataclass
class GrowthTrajectory:
    """Per-sweep record, including the initial state (sweeps + 1 entries)."""

    sweep: np.ndarray
    grain_count: np.ndarray
    energy: np.ndarray
    accepted: np.ndarray  # accepted[0] = 0 by convention


def run_growth(
    dims,
    config: PottsConfig,
    sweeps: int,
    mobility=None,
) -> tuple[SimState, GrowthTrajectory]:
    """Run grain growth from random spins; deterministic for a fixed seed."""
    if sweeps < 0:
        raise InvalidConfig(f"sweeps must be >= 0, got {sweeps}")
    state = init_random_spins(dims, config.q, config.seed, config)
    state.energy = boundary_energy(state, config)
    mob = _mobility_grid(mobility, state.labels.dims)

    counts = np.empty(sweeps + 1, dtype=np.int64)
    energies = np.empty(sweeps + 1, dtype=np.int64)
    accepts = np.zeros(sweeps + 1, dtype=np.int64)
    counts[0] = np.unique(state.labels_flat).size
    energies[0] = state.energy
    for s in range(1, sweeps + 1):
        accepts[s] = metropolis_sweep(state, config, mob)
        counts[s] = np.unique(state.labels_flat).size
        energies[s] = state.energy
    traj = GrowthTrajectory(
        sweep=np.arange(sweeps + 1), grain_count=counts, energy=energies, accepted=accepts
    )
    return state, traj


def generate_dataset(
    n_runs: int,
    dims,
    config: PottsConfig,
    sweeps: int,
    base_seed: int,
    out_dir,
    mobility=None,
) -> list[Path]:
    """Write ``n_runs`` independent growth results as GVOX files.

    Run ``k`` uses seed ``base_seed + k``; file names are deterministic.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    paths = []
    for k in range(n_runs):
        run_cfg = PottsConfig(
            q=config.q,
            temperature=config.temperature,
            neighborhood=config.neighborhood,
            boundary=config.boundary,
            seed=base_seed + k,
        )
        state, _ = run_growth(dims, run_cfg, sweeps, mobility=mobility)
        state.labels.meta.extra.update(
            {"sweeps": sweeps, "temperature": config.temperature, "run": k}
        )
        path = out / f"kmc_{k:04d}.gvox"
        write_gvox(state.labels, path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Position-dependent mobility from a rastered melt-pool path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipsoidPool:
    """Axis-aligned ellipsoidal melt pool: center and semi-axes in voxels."""

    center: tuple
    semi_axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        if len(self.center) != 3 or len(self.semi_axes) != 3:
            raise InvalidConfig("pool center and semi_axes must have 3 components")
        if any(a <= 0 for a in self.semi_axes):
            raise InvalidConfig(f"semi-axes must be positive, got {self.semi_axes}")


@dataclass
class MobilityField:
    """Distance-to-melt-pool field with cutoff ``mz``.

    ``M(x) = 1 - d(x)/mz`` for ``d <= mz`` and 0 beyond; sites with zero
    mobility never flip.
    """

    distance: Callable[[np.ndarray], np.ndarray]
    mz: float
    dims: Dims | None = None

    def __post_init__(self):
        if self.mz <= 0:
            raise InvalidConfig(f"mz must be positive, got {self.mz}")

    def mobility_at(self, points: np.ndarray) -> np.ndarray:
        d = np.asarray(self.distance(points), dtype=np.float64)
        return np.clip(1.0 - d / self.mz, 0.0, 1.0)

    def mobility_grid(self, dims=None) -> np.ndarray:
        dims = tuple(dims) if dims is not None else self.dims
        if dims is None:
            raise InvalidConfig("mobility grid needs explicit dims")
        nx, ny, nz = dims
        idx = np.arange(nx * ny * nz, dtype=np.int64)
        pts = np.column_stack((idx % nx, (idx // nx) % ny, idx // (nx * ny))).astype(
            np.float64
        )
        grid = self.mobility_at(pts).astype(np.float32)
        return grid.reshape(dims, order="F")


def _ellipsoid_surface_distance(points: np.ndarray, pool: EllipsoidPool) -> np.ndarray:
    """Exact Euclidean distance from points to the ellipsoid surface; 0 inside.

    Outside points solve sum_i (a_i q_i / (t + a_i^2))^2 = 1 for t >= 0 by
    bisection (the function is strictly decreasing in t).
    """
    axes = np.asarray(pool.semi_axes, dtype=np.float64)
    q = np.abs(np.asarray(points, dtype=np.float64) - np.asarray(pool.center))
    if axes[0] == axes[1] == axes[2]:
        return np.maximum(0.0, np.linalg.norm(q, axis=1) - axes[0])
    rho2 = ((q / axes) ** 2).sum(axis=1)
    out = np.zeros(len(q), dtype=np.float64)
    outside = rho2 > 1.0
    if not outside.any():
        return out

    qo = q[outside]
    norm = np.linalg.norm(qo, axis=1)
    t_lo = np.zeros(len(qo))
    t_hi = norm * axes.max() + 1.0
    aq2 = (axes * qo) ** 2
    a2 = axes**2
    for _ in range(90):
        t = 0.5 * (t_lo + t_hi)
        f = (aq2 / (t[:, None] + a2) ** 2).sum(axis=1)
        high = f > 1.0
        t_lo = np.where(high, t, t_lo)
        t_hi = np.where(high, t_hi, t)
    t = 0.5 * (t_lo + t_hi)
    out[outside] = np.sqrt(((t[:, None] * qo / (t[:, None] + a2)) ** 2).sum(axis=1))
    return out


def raster_meltpool_distance(dims, path_spec: Sequence[EllipsoidPool], mz: float) -> MobilityField:
    """Build the mobility field for a sequence of ellipsoidal pools along a
    raster path. ``d(x)`` is the distance to the nearest pool surface."""
    pools = [
        p if isinstance(p, EllipsoidPool) else EllipsoidPool(*p) for p in path_spec
    ]
    if not pools:
        raise InvalidConfig("melt-pool path must contain at least one pool")
    dims = tuple(int(d) for d in dims)

    def distance(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = np.full(len(points), np.inf)
        for pool in pools:
            np.minimum(d, _ellipsoid_surface_distance(points, pool), out=d)
        return d

    return MobilityField(distance=distance, mz=float(mz), dims=dims)
