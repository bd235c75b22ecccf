"""Build the optional Cython speedup modules.

The package works without them (pure-Python kernels are selected at import
time), but the kMC sweep and DBSCAN expansion are orders of magnitude faster
compiled.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "grainforge._kmc_sweep",
        sources=["src/grainforge/_kmc_sweep.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    ),
    Extension(
        "grainforge._dbscan_expand",
        sources=["src/grainforge/_dbscan_expand.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    ),
]

setup(ext_modules=cythonize(extensions, language_level=3))
