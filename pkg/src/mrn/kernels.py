"""Hot numeric kernels: numba-jitted fast paths with plain numpy fallbacks.

The fallback is selected automatically when numba is unavailable, or
explicitly by setting the environment variable ``MRN_DISABLE_NUMBA=1``
before import.  Both paths are exercised against each other in the test
suite; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("MRN_DISABLE_NUMBA", "") not in (
    "1",
    "true",
    "yes",
)

SQRT2 = float(np.sqrt(2.0))


# ---------------------------------------------------------------------------
# value iteration sweep loop (tabular, deterministic transitions)
# ---------------------------------------------------------------------------

def _vi_numpy(next_state, rewards, gamma, stop, max_sweeps, residuals):
    q = np.zeros(rewards.shape, dtype=np.float64)
    flat_next = next_state.ravel()
    flat_r = rewards.ravel()
    for k in range(max_sweeps):
        v = q.max(axis=1)
        qn = (flat_r + gamma * v[flat_next]).reshape(q.shape)
        resid = np.abs(qn - q).max()
        residuals[k] = resid
        q = qn
        if resid <= stop:
            return q, k + 1
    return q, -1


def _vi_loops(next_state, rewards, gamma, stop, max_sweeps, residuals):
    n_s, n_a = rewards.shape
    q = np.zeros((n_s, n_a), dtype=np.float64)
    v = np.empty(n_s, dtype=np.float64)
    for k in range(max_sweeps):
        for s in range(n_s):
            m = q[s, 0]
            for a in range(1, n_a):
                if q[s, a] > m:
                    m = q[s, a]
            v[s] = m
        resid = 0.0
        for s in range(n_s):
            for a in range(n_a):
                val = rewards[s, a] + gamma * v[next_state[s, a]]
                diff = val - q[s, a]
                if diff < 0.0:
                    diff = -diff
                if diff > resid:
                    resid = diff
                q[s, a] = val
        residuals[k] = resid
        if resid <= stop:
            return q, k + 1
    return q, -1


# ---------------------------------------------------------------------------
# exhaustive triangle-inequality scan over a distance table (may hold +inf)
# ---------------------------------------------------------------------------

def _triangle_numpy(d, tol):
    n = d.shape[0]
    count = 0
    worst = -np.inf
    wi = wj = wk = -1
    for k in range(n):
        through = d[:, k : k + 1] + d[k : k + 1, :]
        count += int((d > through + tol).sum())
        margins = np.where(np.isfinite(through), d - through, -np.inf)
        flat = int(np.argmax(margins))
        m = margins.flat[flat]
        if m > worst:
            worst = float(m)
            wi, wj = divmod(flat, n)
            wk = k
    return count, worst, wi, wj, wk


def _triangle_loops(d, tol):
    n = d.shape[0]
    count = 0
    worst = -np.inf
    wi = wj = wk = -1
    for k in range(n):
        for i in range(n):
            dik = d[i, k]
            if dik == np.inf:
                continue
            for j in range(n):
                through = dik + d[k, j]
                if d[i, j] > through + tol:
                    count += 1
                if through == np.inf:
                    continue
                m = d[i, j] - through
                if m > worst:
                    worst = m
                    wi = i
                    wj = j
                    wk = k
    return count, worst, wi, wj, wk


# ---------------------------------------------------------------------------
# Dijkstra on the toy-world grid graph
#
# Every edge is either a straight grid step (cost h) or a diagonal one
# (cost h*sqrt(2)), so a path cost is exactly ns*h + nd*h*sqrt(2) for
# integer step counts (ns, nd).  The kernels optimise over the exact
# integer pairs (float keys only order the heap), which makes reverse
# paths on symmetric worlds land on bit-identical distances.
# ---------------------------------------------------------------------------

def _count_pair_less(a1, b1, a2, b2):
    # a1 + b1*sqrt2 < a2 + b2*sqrt2, decided exactly over int64
    p = a1 - a2
    q = b2 - b1
    if q == 0:
        return p < 0
    if q > 0:
        if p < 0:
            return True
        return p * p < 2 * q * q
    if p >= 0:
        return False
    return p * p > 2 * q * q


def _dijkstra_python(indptr, indices, is_diag, source):
    import heapq

    n = indptr.shape[0] - 1
    ns = np.full(n, -1, dtype=np.int64)
    nd = np.full(n, -1, dtype=np.int64)
    ns[source] = 0
    nd[source] = 0
    heap = [(0.0, source, 0, 0)]
    while heap:
        _, u, us, ud = heapq.heappop(heap)
        if us != ns[u] or ud != nd[u]:
            continue
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            cs = us + (0 if is_diag[e] else 1)
            cd = ud + (1 if is_diag[e] else 0)
            if ns[v] < 0 or _count_pair_less(cs, cd, ns[v], nd[v]):
                ns[v] = cs
                nd[v] = cd
                heapq.heappush(heap, (cs + cd * SQRT2, v, cs, cd))
    return ns, nd


def _dijkstra_loops(indptr, indices, is_diag, source):
    n = indptr.shape[0] - 1
    ns = np.full(n, -1, dtype=np.int64)
    nd = np.full(n, -1, dtype=np.int64)
    ns[source] = 0
    nd[source] = 0

    cap = 4 * indices.shape[0] + 16
    h_key = np.empty(cap, dtype=np.float64)
    h_node = np.empty(cap, dtype=np.int64)
    h_ns = np.empty(cap, dtype=np.int64)
    h_nd = np.empty(cap, dtype=np.int64)
    h_key[0] = 0.0
    h_node[0] = source
    h_ns[0] = 0
    h_nd[0] = 0
    size = 1

    while size > 0:
        u = h_node[0]
        us = h_ns[0]
        ud = h_nd[0]
        # pop root, sift down
        size -= 1
        k = h_key[size]
        v0 = h_node[size]
        s0 = h_ns[size]
        d0 = h_nd[size]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= size:
                break
            if c + 1 < size and h_key[c + 1] < h_key[c]:
                c += 1
            if h_key[c] < k:
                h_key[i] = h_key[c]
                h_node[i] = h_node[c]
                h_ns[i] = h_ns[c]
                h_nd[i] = h_nd[c]
                i = c
            else:
                break
        h_key[i] = k
        h_node[i] = v0
        h_ns[i] = s0
        h_nd[i] = d0

        if us != ns[u] or ud != nd[u]:
            continue
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if is_diag[e]:
                cs = us
                cd = ud + 1
            else:
                cs = us + 1
                cd = ud
            better = False
            if ns[v] < 0:
                better = True
            else:
                p = cs - ns[v]
                q = nd[v] - cd
                if q == 0:
                    better = p < 0
                elif q > 0:
                    better = p < 0 or p * p < 2 * q * q
                else:
                    better = p < 0 and p * p > 2 * q * q
            if better:
                ns[v] = cs
                nd[v] = cd
                if size >= cap:
                    raise RuntimeError("dijkstra heap overflow")
                # push, sift up
                key = cs + cd * SQRT2
                i = size
                size += 1
                while i > 0:
                    par = (i - 1) // 2
                    if h_key[par] <= key:
                        break
                    h_key[i] = h_key[par]
                    h_node[i] = h_node[par]
                    h_ns[i] = h_ns[par]
                    h_nd[i] = h_nd[par]
                    i = par
                h_key[i] = key
                h_node[i] = v
                h_ns[i] = cs
                h_nd[i] = cd
    return ns, nd


if NUMBA_ENABLED:
    _vi_fast = _njit(cache=True)(_vi_loops)
    _triangle_fast = _njit(cache=True)(_triangle_loops)
    _dijkstra_fast = _njit(cache=True)(_dijkstra_loops)
else:
    _vi_fast = _vi_numpy
    _triangle_fast = _triangle_numpy
    _dijkstra_fast = _dijkstra_python


def value_iteration_table(next_state, rewards, gamma, stop, max_sweeps):
    """Iterate q(s,a) = r(s,a) + gamma * max_a' q(next(s,a), a') from zeros.

    Returns (q, n_sweeps, residuals); n_sweeps is -1 when the sweep cap was
    hit before the sup-norm residual dropped to ``stop``.
    """
    next_state = np.ascontiguousarray(next_state, dtype=np.int64)
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    residuals = np.empty(max_sweeps, dtype=np.float64)
    q, n = _vi_fast(next_state, rewards, float(gamma), float(stop), int(max_sweeps), residuals)
    return q, int(n), residuals[: n if n > 0 else max_sweeps]


def triangle_scan(d, tol):
    """Exhaustively scan d (n x n, +inf allowed) for triangle violations.

    Returns (count, worst_margin, witness) where margin = d[i,j] - d[i,k] - d[k,j]
    and witness = (i, j, k) attaining the worst finite-through margin.
    """
    d = np.ascontiguousarray(d, dtype=np.float64)
    count, worst, wi, wj, wk = _triangle_fast(d, float(tol))
    return int(count), float(worst), (int(wi), int(wj), int(wk))


def dijkstra_counts(indptr, indices, is_diag, source):
    """Single-source shortest paths over a grid graph in exact step counts.

    Edge costs are implicit: straight steps count 1 into ns, diagonal steps
    1 into nd; the true cost is h*(ns + nd*sqrt(2)).  Unreachable nodes get
    ns = nd = -1.
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    is_diag = np.ascontiguousarray(is_diag, dtype=np.uint8)
    return _dijkstra_fast(indptr, indices, is_diag, int(source))


def counts_to_distance(ns, nd, spacing):
    """Convert exact step counts to float distances; -1 counts become +inf."""
    dist = spacing * (ns + nd * SQRT2)
    return np.where(ns < 0, np.inf, dist)
