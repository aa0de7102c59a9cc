"""Benchmark the numba kernels against their plain-python/numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
The numba path must be enabled (do not set MRN_DISABLE_NUMBA).
"""

import time

import numpy as np

from mrn import kernels
from mrn.toyworld import ToyWorld


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_value_iteration():
    rng = np.random.default_rng(0)
    instances = []
    for _ in range(30):
        n_s, n_a = 6, 3
        nxt = rng.integers(0, n_s, size=(n_s, n_a)).astype(np.int64)
        rewards = np.where(rng.random((n_s, n_a)) < 0.1, 0.0, -1.0)
        instances.append((nxt, rewards))
    stop = 1e-10 * (1 - 0.98)
    resid = np.empty(2000)

    def run(impl):
        for nxt, rewards in instances:
            impl(nxt, rewards, 0.98, stop, 2000, resid)

    return run


def bench_triangle():
    rng = np.random.default_rng(1)
    d = rng.uniform(0.5, 2.0, size=(400, 400))
    np.fill_diagonal(d, 0.0)

    def make(impl):
        return lambda: impl(d, 1e-9)

    return make


def bench_dijkstra():
    world = ToyWorld(eta=0.15, grid_n=64)
    indptr, indices, diag = world.graph()
    sources = np.arange(0, world.n_nodes, 97)

    def make(impl):
        def run():
            for s in sources:
                impl(indptr, indices, diag, int(s))

        return run

    return make


def main():
    if not kernels.NUMBA_ENABLED:
        raise SystemExit("numba path disabled; unset MRN_DISABLE_NUMBA to benchmark")

    rows = []

    run = bench_value_iteration()
    run(kernels._vi_fast)  # warm the JIT
    fast = timeit(lambda: run(kernels._vi_fast))
    slow = timeit(lambda: run(kernels._vi_numpy))
    rows.append(("value iteration (30 MDPs, gamma .98)", fast, slow))

    make = bench_triangle()
    make(kernels._triangle_fast)()
    fast = timeit(make(kernels._triangle_fast))
    slow = timeit(make(kernels._triangle_numpy))
    rows.append(("triangle scan (n=400, exhaustive)", fast, slow))

    make = bench_dijkstra()
    make(kernels._dijkstra_fast)()
    fast = timeit(make(kernels._dijkstra_fast), repeats=3)
    slow = timeit(make(kernels._dijkstra_python), repeats=3)
    rows.append(("dijkstra (64x64 grid, 43 sources)", fast, slow))

    print(f"{'kernel':<40} {'numba':>10} {'fallback':>10} {'speedup':>8}")
    for name, fast, slow in rows:
        print(f"{name:<40} {fast:>9.4f}s {slow:>9.4f}s {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
