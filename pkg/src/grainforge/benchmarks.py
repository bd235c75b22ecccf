"""Compiled-vs-pure kernel benchmark (also exposed as ``grainforge bench``)."""

from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .kmc import PottsConfig, _neighbor_table, init_random_spins
from .segment import DbscanParams, _core_mask, _spatial_offsets


def _time_kmc(kernel, dims, sweeps: int, seed: int = 7) -> float:
    config = PottsConfig(q=32, temperature=0.5, seed=seed)
    state = init_random_spins(dims, config.q, seed)
    tbl, cnt = _neighbor_table(dims, config.neighborhood, config.boundary)
    n = state.labels.n_voxels
    mob = np.ones(n, dtype=np.float32)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    for _ in range(sweeps):
        perm = rng.permutation(n).astype(np.int64, copy=False)
        kernel(
            state.labels_flat,
            tbl,
            cnt,
            perm,
            rng.random(n),
            rng.random(n),
            mob,
            config.temperature,
        )
    return time.perf_counter() - start


def _time_dbscan(kernel, dims, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    values = (rng.integers(0, 12, size=dims) / 12.0).astype(np.float32)
    params = DbscanParams()
    core = _core_mask(values, params)
    doff, d2 = _spatial_offsets(params.eps)
    nx, ny = dims[0], dims[1]
    deltas = (doff[:, 0] + nx * (doff[:, 1] + ny * doff[:, 2])).astype(np.int32)
    flat_v = np.ascontiguousarray(values.ravel(order="F"), dtype=np.float32)
    flat_c = np.ascontiguousarray(core.ravel(order="F"), dtype=np.uint8)
    labels = np.full(flat_v.size, -1, dtype=np.int32)
    start = time.perf_counter()
    kernel(flat_v, flat_c, labels, tuple(dims), deltas, doff, d2,
           params.eps**2, params.value_gain)
    return time.perf_counter() - start


def run_benchmarks(dims=(32, 32, 32), sweeps: int = 5) -> dict:
    """Time both kernel backends on the same workload."""
    dims = tuple(int(d) for d in dims)
    n_updates = dims[0] * dims[1] * dims[2] * sweeps
    out: dict = {"dims": dims, "kmc_sweeps": sweeps, "compiled_available": _kernels.HAVE_COMPILED}

    t_py = _time_kmc(_kernels.kmc_sweep_python, dims, sweeps)
    out["kmc_python_s"] = round(t_py, 4)
    out["kmc_python_updates_per_s"] = round(n_updates / t_py)
    if _kernels.HAVE_COMPILED:
        t_c = _time_kmc(_kernels.kmc_sweep_compiled, dims, sweeps)
        out["kmc_compiled_s"] = round(t_c, 4)
        out["kmc_compiled_updates_per_s"] = round(n_updates / t_c)
        out["kmc_speedup"] = round(t_py / t_c, 1)

    t_py = _time_dbscan(_kernels.dbscan_expand_python, dims)
    out["dbscan_python_s"] = round(t_py, 4)
    if _kernels.HAVE_COMPILED:
        t_c = _time_dbscan(_kernels.dbscan_expand_compiled, dims)
        out["dbscan_compiled_s"] = round(t_c, 4)
        out["dbscan_speedup"] = round(t_py / t_c, 1)
    return out
