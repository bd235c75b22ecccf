"""Pure-Python DBSCAN cluster-expansion kernel.

Reference twin of ``_dbscan_expand.pyx``. Expansion discipline (shared with
the O(n^2) oracle used in tests): scan points in linear-index order, seed a
cluster at each unclaimed core point, breadth-first expand, claiming
neighbors in ascending index order; only core neighbors are enqueued.
"""

from __future__ import annotations

import numpy as np

UNSET = -1


def dbscan_expand_kernel(
    values: np.ndarray,
    core: np.ndarray,
    labels: np.ndarray,
    dims,
    deltas: np.ndarray,
    doff: np.ndarray,
    d2: np.ndarray,
    eps2: float,
    gain: float,
) -> int:
    nx, ny, nz = dims
    n = values.shape[0]
    nk = deltas.shape[0]
    queue = np.empty(n, dtype=np.int32)
    cid = 0
    for p in range(n):
        if labels[p] != UNSET or not core[p]:
            continue
        labels[p] = cid
        queue[0] = p
        head, tail = 0, 1
        while head < tail:
            q = int(queue[head])
            head += 1
            qx = q % nx
            qy = (q // nx) % ny
            qz = q // (nx * ny)
            vq = float(values[q])
            for k in range(nk):
                rx = qx + doff[k, 0]
                ry = qy + doff[k, 1]
                rz = qz + doff[k, 2]
                if not (0 <= rx < nx and 0 <= ry < ny and 0 <= rz < nz):
                    continue
                r = q + int(deltas[k])
                if labels[r] != UNSET:
                    continue
                dv = gain * (vq - float(values[r]))
                if d2[k] + dv * dv <= eps2:
                    labels[r] = cid
                    if core[r]:
                        queue[tail] = r
                        tail += 1
        cid += 1
    return cid
