"""Kernel backend selection: compiled Cython extensions with pure-Python fallback.

Set ``GRAINFORGE_PURE=1`` to force the pure-Python kernels (used by the
benchmark and by tests that check the two backends agree bit-for-bit).
"""

from __future__ import annotations

import os

from ._dbscan_py import dbscan_expand_kernel as dbscan_expand_python
from ._kmc_py import metropolis_sweep_kernel as kmc_sweep_python

try:
    from ._dbscan_expand import dbscan_expand_kernel as dbscan_expand_compiled
    from ._kmc_sweep import metropolis_sweep_kernel as kmc_sweep_compiled

    HAVE_COMPILED = True
except ImportError:  # extensions not built
    dbscan_expand_compiled = None
    kmc_sweep_compiled = None
    HAVE_COMPILED = False

_FORCE_PURE = os.environ.get("GRAINFORGE_PURE", "0") not in ("", "0")

if HAVE_COMPILED and not _FORCE_PURE:
    KERNEL_BACKEND = "compiled"
    kmc_sweep = kmc_sweep_compiled
    dbscan_expand = dbscan_expand_compiled
else:
    KERNEL_BACKEND = "python"
    kmc_sweep = kmc_sweep_python
    dbscan_expand = dbscan_expand_python
