"""Throughput comparison of the two frequency-sweep backends.

Runs the same batched transfer-matrix evaluation through the jitted
kernel and the vectorised numpy path, over a range of model sizes and
grid lengths, and prints a table of timings.  The numbers justify (or
refute) keeping the jitted hot path; the env var ``COHERENTCTL_NUMBA=0``
switches the whole package to the numpy path regardless.

Usage::

    python benchmarks/bench_freq_sweep.py [--repeats N]
"""

import argparse
import time

import numpy as np

from coherentctl._accel import HAS_NUMBA, sweep_numba, sweep_numpy


def random_model(rng, n, p, m):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a -= (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(n)
    b = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    c = rng.standard_normal((p, n)) + 1j * rng.standard_normal((p, n))
    d = rng.standard_normal((p, m)) + 1j * rng.standard_normal((p, m))
    return a, b, c, d


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        (2, 2, 2, 385),
        (8, 4, 4, 385),
        (8, 4, 4, 4097),
        (24, 6, 6, 385),
        (24, 6, 6, 4097),
        (64, 8, 8, 1025),
    ]

    print(f"numba available: {HAS_NUMBA}")
    header = f"{'states':>6} {'out':>4} {'in':>4} {'grid':>6} {'numpy [ms]':>11}"
    if HAS_NUMBA:
        header += f" {'numba [ms]':>11} {'speedup':>8}"
    print(header)

    for n, p, m, k in cases:
        a, b, c, d = random_model(rng, n, p, m)
        omegas = np.logspace(-3.0, 3.0, k)
        t_np = best_of(lambda: sweep_numpy(a, b, c, d, omegas), args.repeats)
        row = f"{n:>6} {p:>4} {m:>4} {k:>6} {1e3 * t_np:>11.3f}"
        if HAS_NUMBA:
            sweep_numba(a, b, c, d, omegas[:4])  # compile outside the clock
            t_nb = best_of(lambda: sweep_numba(a, b, c, d, omegas), args.repeats)
            ref = sweep_numpy(a, b, c, d, omegas)
            got = sweep_numba(a, b, c, d, omegas)
            assert np.abs(got - ref).max() < 1e-10 * max(1.0, np.abs(ref).max())
            row += f" {1e3 * t_nb:>11.3f} {t_np / t_nb:>8.2f}x"
        print(row)


if __name__ == "__main__":
    main()
