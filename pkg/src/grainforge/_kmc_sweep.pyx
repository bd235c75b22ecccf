# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Metropolis sweep kernel.

Must stay semantically identical to ``_kmc_py.metropolis_sweep_kernel``:
same proposal choice, same acceptance arithmetic, same consumption of the
pre-drawn random numbers.
"""

from libc.math cimport exp

import numpy as np

cimport numpy as cnp

cnp.import_array()


def metropolis_sweep_kernel(
    cnp.uint32_t[::1] labels,
    cnp.int32_t[:, ::1] nbr_idx,
    cnp.uint8_t[::1] nbr_cnt,
    cnp.int64_t[::1] perm,
    cnp.float64_t[::1] u_choice,
    cnp.float64_t[::1] u_accept,
    cnp.float32_t[::1] mobility,
    double temperature,
):
    cdef Py_ssize_t i, k, n = perm.shape[0]
    cdef Py_ssize_t s
    cdef int cnt, j, de
    cdef cnp.uint32_t prop, cur, nb
    cdef double p
    cdef long long accepted = 0
    cdef long long de_sum = 0

    for i in range(n):
        s = <Py_ssize_t>perm[i]
        cnt = nbr_cnt[s]
        j = <int>(u_choice[i] * cnt)
        prop = labels[nbr_idx[s, j]]
        cur = labels[s]
        de = 0
        if prop != cur:
            for k in range(cnt):
                nb = labels[nbr_idx[s, k]]
                de += (1 if nb != prop else 0) - (1 if nb != cur else 0)
        if de <= 0:
            p = 1.0
        elif temperature > 0.0:
            p = exp(-de / temperature)
        else:
            p = 0.0
        p *= mobility[s]
        if u_accept[i] < p and prop != cur:
            labels[s] = prop
            accepted += 1
            de_sum += de
    return int(accepted), int(de_sum)
