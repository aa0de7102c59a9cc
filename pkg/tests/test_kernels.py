import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.csgraph

from mrn import kernels


def random_vi_instance(seed):
    rng = np.random.default_rng(seed)
    n_s = int(rng.integers(2, 7))
    n_a = int(rng.integers(1, 4))
    nxt = rng.integers(0, n_s, size=(n_s, n_a))
    rewards = np.where(rng.random((n_s, n_a)) < 0.2, 0.0, -1.0)
    return nxt, rewards


@pytest.mark.parametrize("seed", range(6))
def test_vi_paths_agree(seed):
    nxt, rewards = random_vi_instance(seed)
    args = (nxt, rewards, 0.9, 1e-11, 5000)
    resid_a = np.empty(5000)
    resid_b = np.empty(5000)
    qa, na = kernels._vi_numpy(nxt.astype(np.int64), rewards, 0.9, 1e-11, 5000, resid_a)
    qb, nb = kernels._vi_loops(nxt.astype(np.int64), rewards, 0.9, 1e-11, 5000, resid_b)
    assert na == nb
    assert np.array_equal(qa, qb)
    assert np.array_equal(resid_a[:na], resid_b[:nb])
    q, n, resid = kernels.value_iteration_table(*args)
    assert n == na
    assert np.array_equal(q, qa)


def test_vi_signals_non_convergence():
    nxt, rewards = random_vi_instance(0)
    _, n, _ = kernels.value_iteration_table(nxt, rewards, 0.99, 1e-12, 3)
    assert n == -1


def random_distance_table(seed, n=14, with_inf=True):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, 2.0, size=(n, n))
    np.fill_diagonal(d, 0.0)
    if with_inf:
        mask = rng.random((n, n)) < 0.1
        np.fill_diagonal(mask, False)
        d[mask] = np.inf
    return d


@pytest.mark.parametrize("seed", range(6))
def test_triangle_paths_agree(seed):
    d = random_distance_table(seed)
    out_np = kernels._triangle_numpy(d, 1e-9)
    out_lp = kernels._triangle_loops(d, 1e-9)
    assert out_np[0] == out_lp[0]
    assert out_np[1] == out_lp[1]
    assert out_np[2:] == out_lp[2:]
    count, worst, witness = kernels.triangle_scan(d, 1e-9)
    assert count == out_np[0]


def test_triangle_scan_catches_infinite_margin():
    # d(i,j) infinite but a finite two-hop path exists: margin must be +inf
    d = np.array([[0.0, 1.0, np.inf], [np.inf, 0.0, 1.0], [np.inf, np.inf, 0.0]])
    count, worst, witness = kernels.triangle_scan(d, 1e-9)
    assert count == 1
    assert worst == np.inf
    assert witness == (0, 2, 1)


def grid_csr(seed, n=8, directed=True):
    rng = np.random.default_rng(seed)
    rows = []
    for iy in range(n):
        for ix in range(n):
            u = iy * n + ix
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < n and 0 <= jy < n:
                    if directed and rng.random() < 0.2:
                        continue
                    rows.append((u, jy * n + jx, abs(dx) + abs(dy) == 2))
    rows.sort()
    src = np.array([r[0] for r in rows])
    dst = np.array([r[1] for r in rows], dtype=np.int64)
    diag = np.array([r[2] for r in rows], dtype=np.uint8)
    indptr = np.zeros(n * n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n * n), out=indptr[1:])
    return indptr, dst, diag


@pytest.mark.parametrize("seed", range(4))
def test_dijkstra_paths_agree_bitwise(seed):
    indptr, indices, diag = grid_csr(seed)
    for source in (0, 17, 63):
        ns_a, nd_a = kernels._dijkstra_python(indptr, indices, diag, source)
        ns_b, nd_b = kernels.dijkstra_counts(indptr, indices, diag, source)
        assert np.array_equal(ns_a, ns_b)
        assert np.array_equal(nd_a, nd_b)


@pytest.mark.parametrize("seed", range(4))
def test_dijkstra_matches_scipy(seed):
    indptr, indices, diag = grid_csr(seed)
    n = indptr.shape[0] - 1
    h = 0.125
    weights = np.where(diag, h * kernels.SQRT2, h)
    graph = scipy.sparse.csr_matrix((weights, indices, indptr), shape=(n, n))
    ref = scipy.sparse.csgraph.dijkstra(graph, indices=5)
    ns, nd = kernels.dijkstra_counts(indptr, indices, diag, 5)
    dist = kernels.counts_to_distance(ns, nd, h)
    finite = np.isfinite(ref)
    assert np.array_equal(np.isfinite(dist), finite)
    assert np.allclose(dist[finite], ref[finite], atol=1e-12, rtol=0)


def test_disable_flag_selects_fallback():
    code = (
        "import os; os.environ['MRN_DISABLE_NUMBA'] = '1'; "
        "from mrn import kernels; "
        "assert not kernels.NUMBA_ENABLED; "
        "assert kernels._vi_fast is kernels._vi_numpy"
    )
    subprocess.run([sys.executable, "-c", code], check=True)


def test_counts_to_distance_marks_unreachable():
    dist = kernels.counts_to_distance(np.array([2, -1]), np.array([1, -1]), 0.5)
    assert dist[0] == pytest.approx(0.5 * (2 + kernels.SQRT2))
    assert dist[1] == np.inf
