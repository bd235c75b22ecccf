# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled DBSCAN cluster-expansion kernel (twin of ``_dbscan_py``)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef int UNSET = -1


def dbscan_expand_kernel(
    cnp.float32_t[::1] values,
    cnp.uint8_t[::1] core,
    cnp.int32_t[::1] labels,
    dims,
    cnp.int32_t[::1] deltas,
    cnp.int32_t[:, ::1] doff,
    cnp.float64_t[::1] d2,
    double eps2,
    double gain,
):
    cdef Py_ssize_t nx = dims[0], ny = dims[1], nz = dims[2]
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t nk = deltas.shape[0]
    cdef cnp.int32_t[::1] queue = np.empty(n, dtype=np.int32)
    cdef Py_ssize_t p, q, r, head, tail
    cdef Py_ssize_t qx, qy, qz, rx, ry, rz, k
    cdef double vq, dv
    cdef int cid = 0

    for p in range(n):
        if labels[p] != UNSET or core[p] == 0:
            continue
        labels[p] = cid
        queue[0] = <cnp.int32_t>p
        head = 0
        tail = 1
        while head < tail:
            q = queue[head]
            head += 1
            qx = q % nx
            qy = (q // nx) % ny
            qz = q // (nx * ny)
            vq = values[q]
            for k in range(nk):
                rx = qx + doff[k, 0]
                ry = qy + doff[k, 1]
                rz = qz + doff[k, 2]
                if rx < 0 or rx >= nx or ry < 0 or ry >= ny or rz < 0 or rz >= nz:
                    continue
                r = q + deltas[k]
                if labels[r] != UNSET:
                    continue
                dv = gain * (vq - <double>values[r])
                if d2[k] + dv * dv <= eps2:
                    labels[r] = cid
                    if core[r] != 0:
                        queue[tail] = <cnp.int32_t>r
                        tail += 1
        cid += 1
    return cid
