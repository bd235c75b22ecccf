#!/usr/bin/env python3
"""Compare the compiled Cython kernels against the pure-Python fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--dims 48,48,48] [--sweeps 10]
"""

import argparse
import json

from grainforge.benchmarks import run_benchmarks


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dims", default="48,48,48")
    parser.add_argument("--sweeps", type=int, default=10)
    args = parser.parse_args()
    dims = tuple(int(d) for d in args.dims.split(","))
    print(json.dumps(run_benchmarks(dims, args.sweeps), indent=1))


if __name__ == "__main__":
    main()
