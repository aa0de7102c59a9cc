"""Quasipseudometric axiom checking and the doubled-space lift of optimal values.

A quasipseudometric satisfies d(x,x) = 0, d >= 0 and the triangle
inequality; symmetry is not required.  ``check_axioms`` verifies all three
on a distance table or callable, exhaustively over all triples when
affordable and on sampled triples otherwise.  ``lift_qstar`` embeds a
table of non-positive optimal values into a doubled point set where its
negation becomes a genuine quasipseudometric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels

EXHAUSTIVE_LIMIT = 64


@dataclass
class AxiomCheck:
    axiom: str
    count: int
    worst_margin: float
    witness: tuple = ()

    def ok(self, tol):
        return self.worst_margin <= tol


@dataclass
class AxiomReport:
    tol: float
    n_points: int
    checks: list = field(default_factory=list)
    sampled_triples: int = 0  # 0 means exhaustive

    @property
    def passed(self):
        return all(c.ok(self.tol) for c in self.checks)

    @property
    def total_violations(self):
        return sum(c.count for c in self.checks)

    def __str__(self):
        mode = "exhaustive" if not self.sampled_triples else f"{self.sampled_triples} sampled triples"
        lines = [f"axiom check on {self.n_points} points ({mode}), tol {self.tol:g}:"]
        for c in self.checks:
            status = "ok" if c.ok(self.tol) else "VIOLATED"
            lines.append(
                f"  {c.axiom}: {status}, {c.count} violations, worst margin {c.worst_margin:.3e}"
            )
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axiom", "count", "worst_margin", "witness"])
            for c in self.checks:
                w.writerow([c.axiom, c.count, repr(c.worst_margin), " ".join(map(str, c.witness))])


def _table_from_callable(d, points):
    n = points.shape[0]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    vals = d(points[ii.ravel()], points[jj.ravel()])
    return np.asarray(vals, dtype=np.float64).reshape(n, n)


def _check_table(table, tol):
    n = table.shape[0]
    if np.isnan(table).any():
        raise ValueError("distance table contains NaN")

    diag = np.abs(np.diagonal(table))
    i = int(np.argmax(diag))
    identity = AxiomCheck("identity", int((diag > tol).sum()), float(diag[i]), (i,))

    neg = -table
    flat = int(np.argmax(neg))
    nonneg = AxiomCheck(
        "non-negativity",
        int((neg > tol).sum()),
        float(neg.flat[flat]),
        tuple(int(v) for v in divmod(flat, n)),
    )

    count, worst, witness = kernels.triangle_scan(table, tol)
    triangle = AxiomCheck("triangle", count, worst, witness)

    report = AxiomReport(tol=tol, n_points=n)
    report.checks = [nonneg, identity, triangle]
    return report


def _check_sampled(d, points, tol, n_triples, rng):
    n = points.shape[0]
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = rng.integers(0, n, size=(n_triples, 3))
    x, y, z = points[idx[:, 0]], points[idx[:, 1]], points[idx[:, 2]]

    d_self = np.asarray(d(points, points), dtype=np.float64)
    if np.isnan(d_self).any():
        raise ValueError("distance evaluation produced NaN")
    diag = np.abs(d_self)
    i = int(np.argmax(diag))
    identity = AxiomCheck("identity", int((diag > tol).sum()), float(diag[i]), (i,))

    dxy = np.asarray(d(x, y), dtype=np.float64)
    dyz = np.asarray(d(y, z), dtype=np.float64)
    dxz = np.asarray(d(x, z), dtype=np.float64)
    for arr in (dxy, dyz, dxz):
        if np.isnan(arr).any():
            raise ValueError("distance evaluation produced NaN")

    neg = np.concatenate([-dxy, -dyz, -dxz])
    flat = int(np.argmax(neg))
    nonneg = AxiomCheck("non-negativity", int((neg > tol).sum()), float(neg[flat]), (flat,))

    through = dxy + dyz
    margins = np.where(np.isfinite(through), dxz - through, -np.inf)
    t = int(np.argmax(margins))
    triangle = AxiomCheck(
        "triangle",
        int((dxz > through + tol).sum()),
        float(margins[t]),
        tuple(int(v) for v in idx[t]),
    )

    report = AxiomReport(tol=tol, n_points=n, sampled_triples=n_triples)
    report.checks = [nonneg, identity, triangle]
    return report


def check_axioms(d, points=None, tol=1e-9, exhaustive=None, n_triples=100_000, rng=None):
    """Verify non-negativity, identity and the triangle inequality.

    ``d`` is an (n, n) table of extended non-negative reals (+inf allowed),
    or a batch callable d(x_batch, y_batch) -> distances, in which case
    ``points`` supplies the sample set.  Margins are reported as the amount
    by which each axiom is violated; the check passes when every worst
    margin is <= tol.
    """
    if callable(d):
        if points is None:
            raise ValueError("a callable d needs a sample point set")
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        if exhaustive is None:
            exhaustive = n <= EXHAUSTIVE_LIMIT
        if exhaustive:
            return _check_table(_table_from_callable(d, points), tol)
        return _check_sampled(d, points, tol, n_triples, rng)

    table = np.asarray(d, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise ValueError(f"distance table must be square, got {table.shape}")
    n = table.shape[0]
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_LIMIT
    if exhaustive:
        return _check_table(table, tol)
    idx_points = np.arange(n)[:, None]
    lookup = lambda a, b: table[a[:, 0], b[:, 0]]
    return _check_sampled(lookup, idx_points, tol, n_triples, rng)


# ---------------------------------------------------------------------------
# the doubled-space lift
# ---------------------------------------------------------------------------

def lift_qstar(qstar):
    """Lift an (n, n) table of non-positive optimal values onto doubled
    points: index i < n is the plain point, i + n its marked copy.

    Entries: 0 on both diagonals; plain-to-plain off-diagonal keeps the
    original value; plain-to-copy targets keep the original value with the
    mark stripped (the copy of a point is where its self-value lives, so
    the plain diagonal can be zeroed); every row sourced at a marked copy
    is -inf off its own diagonal.  Negating the result yields a table that
    satisfies all three quasipseudometric axioms whenever the input
    satisfies the triangle inequality.
    """
    q = np.asarray(qstar, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"expected a square table, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("optimal-value table must be finite")
    if q.max() > 0:
        raise ValueError(f"optimal-value table has a positive entry ({q.max():g})")
    n = q.shape[0]
    lifted = np.full((2 * n, 2 * n), -np.inf)
    lifted[:n, :n] = q
    np.fill_diagonal(lifted[:n, :n], 0.0)
    lifted[:n, n:] = q
    np.fill_diagonal(lifted[n:, n:], 0.0)
    return lifted


def embedded_goal_index(x, y, n):
    """Index of e(y) in the lifted table: the marked copy when x == y."""
    return y + n if x == y else y


def check_lift(qstar, tol=1e-9):
    """Axiom report for the negated lift of an optimal-value table."""
    return check_axioms(-lift_qstar(qstar), tol=tol, exhaustive=True)
