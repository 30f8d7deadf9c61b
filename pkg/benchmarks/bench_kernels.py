"""Compare the numba kernels with their pure-numpy twins.

    python benchmarks/bench_kernels.py [--n 2048] [--repeat 3]

Each kernel is timed on identical inputs after one warm-up call (which also
triggers JIT compilation) and checked for agreement.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fgn_lan import _jit, kernels, toeplitz


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n):
    spec = toeplitz.build(0.7, n)
    lam = np.linspace(1e-3, np.pi, 2000)
    X = np.random.default_rng(0).standard_normal((8, n))
    return {
        "spectral_sums": lambda f: f(lam, 2.4, 200, True),
        "durbin_variances": lambda f: f(spec.row0),
        "durbin_derivs": lambda f: f(spec.row0, spec.drow0, spec.d2row0),
        "durbin_inverse_factor": lambda f: f(spec.row0, np.zeros((n, n))),
        "durbin_quad": lambda f: f(spec.row0, X),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}  max rel diff")
    for name, call in cases(args.n).items():
        f_np = getattr(kernels, name + "_np")
        f_nb = getattr(kernels, name + "_nb")
        t_np = best_of(lambda: call(f_np), args.repeat)
        t_nb = best_of(lambda: call(f_nb), args.repeat)
        a, b = call(f_np), call(f_nb)
        diff = 0.0
        for x, y in zip(a, b):
            x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
            diff = max(diff, float(np.max(np.abs(x - y) / np.maximum(1.0, np.abs(x)))))
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
