import numpy as np
import pytest

from mrn import nets, quasimetric


def euclidean_table(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def test_euclidean_passes_exhaustively():
    pts = np.random.default_rng(0).normal(size=(10, 2))
    report = quasimetric.check_axioms(euclidean_table(pts), tol=1e-12)
    assert report.passed
    assert report.total_violations == 0


def test_antisymmetric_function_fails_non_negativity():
    # d(x, y) = h(x) - h(y) with non-constant h: identity holds, sign does not
    rng = np.random.default_rng(1)
    h = rng.normal(size=12)
    table = h[:, None] - h[None, :]
    report = quasimetric.check_axioms(table, tol=1e-12)
    nonneg = next(c for c in report.checks if c.axiom == "non-negativity")
    identity = next(c for c in report.checks if c.axiom == "identity")
    assert identity.count == 0
    assert nonneg.count > 0
    i, j = nonneg.witness
    assert table[i, j] < 0


def test_random_euclidean_head_passes_on_sampled_triples():
    # with the euclidean sym form the metric premise holds, so the head is
    # a quasipseudometric for any weight setting
    rng = np.random.default_rng(2)
    head = nets.MrnHead(
        sym=nets.Mlp(6, [16], 5, rng), asym=nets.Mlp(6, [16], 4, rng),
        sym_reduction="euclidean",
    )
    points = rng.normal(size=(400, 6))
    report = quasimetric.check_axioms(
        head.distance_np, points, tol=1e-9, exhaustive=False, n_triples=1000,
        rng=np.random.default_rng(3),
    )
    assert report.passed, str(report)
    assert report.total_violations == 0
    assert report.sampled_triples == 1000


def test_squared_sym_head_violates_triangle():
    # the published head squares the embedding distance, which is not a
    # metric: collinear embeddings break the triangle inequality, and the
    # axiom checker must find this on random inits too
    rng = np.random.default_rng(2)
    head = nets.MrnHead(
        sym=nets.Mlp(6, [16], 5, rng), asym=nets.Mlp(6, [16], 4, rng),
        sym_reduction="mean",
    )
    points = rng.normal(size=(400, 6))
    report = quasimetric.check_axioms(
        head.distance_np, points, tol=1e-9, exhaustive=False, n_triples=1000,
        rng=np.random.default_rng(3),
    )
    triangle = next(c for c in report.checks if c.axiom == "triangle")
    assert triangle.count > 0
    # identity and non-negativity still hold for the squared form
    assert all(c.ok(1e-9) for c in report.checks if c.axiom != "triangle")


def test_injected_triangle_violation_is_found():
    pts = np.random.default_rng(4).normal(size=(12, 3))
    table = euclidean_table(pts)
    table[3, 7] += 1.0
    report = quasimetric.check_axioms(table, tol=1e-9)
    triangle = next(c for c in report.checks if c.axiom == "triangle")
    assert triangle.count > 0
    assert not report.passed
    i, j, k = triangle.witness
    assert (i, j) == (3, 7)
    assert table[i, j] > table[i, k] + table[k, j]


def test_callable_requires_points():
    with pytest.raises(ValueError, match="sample point set"):
        quasimetric.check_axioms(lambda a, b: np.zeros(len(a)))


def test_nan_rejected():
    table = np.zeros((3, 3))
    table[0, 1] = np.nan
    with pytest.raises(ValueError, match="NaN"):
        quasimetric.check_axioms(table)


def test_report_csv_schema(tmp_path):
    pts = np.random.default_rng(5).normal(size=(8, 2))
    report = quasimetric.check_axioms(euclidean_table(pts), tol=1e-12)
    path = tmp_path / "report.csv"
    report.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "axiom,count,worst_margin,witness"
    assert len(lines) == 4


# -- the doubled-space lift --------------------------------------------------

def example_qstar():
    # a valid set of non-positive values satisfying the triangle inequality
    q = -np.array([[1.0, 0.5, 1.0], [0.7, 0.0, 0.6], [1.4, 0.9, 0.2]])
    return q


def test_lift_case_values():
    q = example_qstar()
    lifted = quasimetric.lift_qstar(q)
    n = 3
    # same point on either copy: zero
    assert all(lifted[i, i] == 0.0 for i in range(2 * n))
    # marked copy of the same point: the self value
    assert lifted[1, 1 + n] == q[1, 1]
    # plain off-diagonal values survive
    assert lifted[0, 2] == q[0, 2]
    # marked copies as sources are unreachable-from
    assert lifted[n + 1, 0] == -np.inf
    assert np.isposinf(-lifted[n + 1, 0])


def test_lift_axioms_hold():
    report = quasimetric.check_lift(example_qstar(), tol=1e-12)
    assert report.passed, str(report)


def test_lift_embedding_identity_exact():
    q = example_qstar()
    lifted = quasimetric.lift_qstar(q)
    n = q.shape[0]
    for x in range(n):
        for y in range(n):
            assert lifted[x, quasimetric.embedded_goal_index(x, y, n)] == q[x, y]


def test_lift_rejects_positive_entries():
    q = example_qstar()
    q[0, 1] = 0.3
    with pytest.raises(ValueError, match="positive"):
        quasimetric.lift_qstar(q)


def test_lift_rejects_non_finite():
    q = example_qstar()
    q[0, 1] = -np.inf
    with pytest.raises(ValueError, match="finite"):
        quasimetric.lift_qstar(q)
