#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-Python fallback.

Run:  python benchmarks/bench_backends.py [--pixels N]
"""

import argparse
import time

import numpy as np


def load_backends():
    from spadsim import _kernels_py

    backends = [("python", _kernels_py)]
    try:
        from spadsim import _kernels

        backends.insert(0, ("cython", _kernels))
    except ImportError:
        print("compiled backend not built; benchmarking the fallback only")
    return backends


def bench(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--pixels", type=int, default=20_000)
    args = parser.parse_args()

    n = args.pixels
    rates = np.full(n, 1e5)
    idx = np.arange(n, dtype=np.uint64)
    rows, cols = idx >> np.uint64(16), idx & np.uint64(0xFFFF)
    t_ps, dead_ps = 10**9, 50_000

    jobs = {
        "sim_counts  (lam*T=100)": lambda k: k.sim_counts(
            rates, t_ps, dead_ps, 7, rows, cols
        ),
        "sim_streams (lam*T=100)": lambda k: k.sim_streams(
            rates, t_ps, dead_ps, 7, rows, cols, 0.0, 0, 0.0
        ),
        "sim_streams (nuisances)": lambda k: k.sim_streams(
            rates, t_ps, dead_ps, 7, rows, cols, 0.05, 100_000, 200.0
        ),
        "count_pmf_all (M=20001)": lambda k: k.count_pmf_all(1e5, t_ps, dead_ps),
    }

    backends = load_backends()
    print(f"{args.pixels} pixels per simulation job\n")
    header = f"{'kernel':<26}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, job in jobs.items():
        times = [bench(lambda k=kernel: job(k)) for _, kernel in backends]
        row = f"{label:<26}" + "".join(f"{t:>11.3f}s" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
