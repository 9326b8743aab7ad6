"""Compare the compiled and pure-numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, size) with the median wall time of each
backend, the speed-up, and the max absolute difference between outputs.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from igpk import kernels
from igpk import _kernels_py


def _cases(rng):
    for m, n, d in [(80, 8000, 2), (200, 200, 2), (500, 500, 3), (30, 1500, 1)]:
        Pa = rng.uniform(-3, 3, (m, d))
        Pb = rng.uniform(-3, 3, (n, d))
        inv_ls2 = 1.0 / rng.uniform(0.5, 2.0, d) ** 2
        yield f"rbf_cross {m}x{n} d={d}", "rbf_cross", (Pa, Pb, inv_ls2, 1.3)
    for m, d in [(80, 2), (300, 2)]:
        P = rng.uniform(-3, 3, (m, d))
        inv_ls2 = 1.0 / rng.uniform(0.5, 2.0, d) ** 2
        K = _kernels_py.rbf_cross(P, P, inv_ls2, 1.0)
        yield f"rbf_lengthscale_grads {m} d={d}", "rbf_lengthscale_grads", (P, inv_ls2, K)
    for k, n, d in [(20, 1500, 1), (20, 8000, 2)]:
        yield f"thinplate {k}x{n} d={d}", "thinplate", (rng.uniform(-3, 3, (n, d)), rng.uniform(-3, 3, (k, d)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if "cython" not in kernels.available_backends():
        print("compiled backend not built; only the numpy backend is available", file=sys.stderr)
        return 1
    from igpk import _kernels_ext

    rng = np.random.default_rng(0)
    print(f"{'case':<34}{'cython ms':>11}{'numpy ms':>11}{'speedup':>9}{'max|diff|':>12}")
    for label, name, inputs in _cases(rng):
        fc, fp = getattr(_kernels_ext, name), getattr(_kernels_py, name)
        tc = min(timeit.repeat(lambda: fc(*inputs), number=3, repeat=args.repeat)) / 3
        tp = min(timeit.repeat(lambda: fp(*inputs), number=3, repeat=args.repeat)) / 3
        diff = float(np.max(np.abs(np.asarray(fc(*inputs)) - fp(*inputs))))
        print(f"{label:<34}{tc * 1e3:>11.3f}{tp * 1e3:>11.3f}{tp / tc:>8.1f}x{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
