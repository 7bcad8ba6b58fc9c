#!/usr/bin/env python3
"""Timing comparison of the numba kernels against the numpy fallbacks.

Runs each hot kernel on a range of problem sizes with both backends and
prints a table with the speedup.  The dispatch choice in ``gpsel.kernels``
(numba for the pairwise assemblies, numpy for the profile accumulation)
follows these numbers.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from gpsel import kernels


def timeit(fn, repeat):
    fn()  # warm up / JIT
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best * 1e6


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    if kernels.backend() != "numba":
        print("note: numba backend unavailable or disabled "
              f"(GPSEL_BACKEND={kernels.backend()}); numba columns skipped")

    sizes = [(40, 4), (80, 8), (200, 10), (300, 20)]
    rng = np.random.default_rng(0)
    header = f"{'kernel':<20} {'n':>4} {'d':>3} {'numba us':>10} " \
             f"{'numpy us':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, d in sizes:
        X = rng.random((n, d))
        Q = rng.random((min(4 * n, 1000), d))
        theta = 0.2 + 2.0 * rng.random(d)
        p = 0.4 + 1.5 * rng.random(d)
        prof = kernels.abs_diff_profiles(X) ** p[:, None, None]
        cases = [
            ("corr_matrix",
             (lambda: kernels._corr_matrix_numba(X, theta, p, 0.01))
             if kernels.backend() == "numba" else None,
             lambda: kernels._corr_matrix_numpy(X, theta, p, 0.01)),
            ("cross_corr",
             (lambda: kernels._cross_corr_numba(X, Q, theta, p, 0.01))
             if kernels.backend() == "numba" else None,
             lambda: kernels._cross_corr_numpy(X, Q, theta, p, 0.01)),
            ("corr_from_profiles",
             (lambda: kernels._corr_from_profiles_numba(prof, theta, 0.01))
             if kernels.backend() == "numba" else None,
             lambda: kernels._corr_from_profiles_numpy(prof, theta, 0.01)),
        ]
        for name, fn_nb, fn_np in cases:
            t_np = timeit(fn_np, args.repeat)
            if fn_nb is None:
                print(f"{name:<20} {n:>4} {d:>3} {'-':>10} {t_np:>10.1f} "
                      f"{'-':>8}")
            else:
                t_nb = timeit(fn_nb, args.repeat)
                print(f"{name:<20} {n:>4} {d:>3} {t_nb:>10.1f} {t_np:>10.1f} "
                      f"{t_np / t_nb:>8.2f}")


if __name__ == "__main__":
    main()
