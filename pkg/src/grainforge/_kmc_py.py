"""Pure-Python Metropolis sweep kernel.

Reference implementation for the compiled kernel in ``_kmc_sweep.pyx``; both
must consume the pre-drawn random numbers identically so that a simulation
produces bit-identical trajectories on either backend.
"""

from __future__ import annotations

import math

import numpy as np


def metropolis_sweep_kernel(
    labels: np.ndarray,
    nbr_idx: np.ndarray,
    nbr_cnt: np.ndarray,
    perm: np.ndarray,
    u_choice: np.ndarray,
    u_accept: np.ndarray,
    mobility: np.ndarray,
    temperature: float,
):
    """Visit sites in ``perm`` order, proposing a random neighbor's spin.

    Returns ``(accepted_flips, delta_e_sum)`` where ``delta_e_sum`` is the
    summed local boundary-energy change of accepted flips (pairs counted
    once).
    """
    accepted = 0
    de_sum = 0
    n = perm.shape[0]
    for i in range(n):
        s = int(perm[i])
        cnt = int(nbr_cnt[s])
        j = int(u_choice[i] * cnt)
        prop = int(labels[nbr_idx[s, j]])
        cur = int(labels[s])
        de = 0
        if prop != cur:
            for k in range(cnt):
                nb = int(labels[nbr_idx[s, k]])
                de += (nb != prop) - (nb != cur)
        if de <= 0:
            p = 1.0
        elif temperature > 0.0:
            p = math.exp(-de / temperature)
        else:
            p = 0.0
        p *= mobility[s]
        if u_accept[i] < p and prop != cur:
            labels[s] = prop
            accepted += 1
            de_sum += de
    return accepted, de_sum
