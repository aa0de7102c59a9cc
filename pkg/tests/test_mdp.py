import numpy as np
import pytest

from mrn import mdp, quasimetric


def two_cycle(gamma=0.9):
    # one action that swaps the two states; goals are the pairs themselves
    return mdp.DiscreteGcMdp(
        next_state=[[1], [0]], goal_map=[[0], [1]], n_goals=2, gamma=gamma
    )


def test_self_loop_goal_is_free():
    m = mdp.DiscreteGcMdp(next_state=[[0], [1]], goal_map=[[0], [1]], n_goals=2, gamma=0.9)
    res = mdp.value_iteration(m, 0, pair_goal=True)
    assert res.values[0, 0] == 0.0


def test_two_cycle_matches_geometric_series():
    # revisiting the goal pair every other step: 0, -1, 0, -1, ...
    res = mdp.value_iteration(two_cycle(0.9), 0, tol=1e-10, pair_goal=True)
    expected = -0.9 / (1 - 0.9**2)
    assert res.values[0, 0] == pytest.approx(expected, abs=1e-9)


def test_unreachable_goal_value():
    m = mdp.DiscreteGcMdp(next_state=[[0], [1]], goal_map=[[0], [1]], n_goals=2, gamma=0.9)
    res = mdp.value_iteration(m, 1)  # goal 1 never achievable from state 0
    assert res.values[0, 0] == pytest.approx(-10.0, abs=1e-9)


def test_iteration_count_within_cap():
    m = two_cycle(0.98)
    res = mdp.value_iteration(m, 0, tol=1e-10, pair_goal=True)
    assert res.sweeps <= mdp.sweep_cap(0.98, 1e-10)
    assert res.residual <= 1e-10 * (1 - 0.98)


def test_residuals_contract_by_gamma():
    m = mdp.random_mdp(np.random.default_rng(0), gamma=0.9, identity_goals=True)
    res = mdp.value_iteration(m, 0, tol=1e-10, pair_goal=True)
    r = res.residuals
    # contraction per sweep, up to absolute rounding noise in the residual
    # (values are O(1/(1-gamma)), so differences carry ~1e-14 of noise)
    assert (r[1:] <= m.gamma * r[:-1] + 1e-13).all()


def test_values_lie_in_return_range():
    for seed in range(5):
        m = mdp.random_mdp(np.random.default_rng(seed), gamma=0.98, identity_goals=True)
        q = mdp.q_star_pairwise(m)
        assert q.max() <= 1e-12
        assert q.min() >= -1.0 / (1 - m.gamma) - 1e-9


def test_triangle_holds_on_random_corpus():
    for m in mdp.make_corpus(123, 10, gammas=(0.9, 0.98), identity_goals=True):
        report = mdp.verify_triangle(m)
        assert report.passed, str(report)
        assert report.n_triples == m.n_x**3


def test_triangle_middle_equal_endpoint_reduces_to_sign():
    m = two_cycle()
    q = mdp.q_star_pairwise(m)
    # x2 == x1 reduces the inequality to Q*(x1, x1) <= 0
    assert (q.diagonal() <= 1e-12).all()


def test_fault_injection_is_detected():
    # two self-loop states: Q*(x0, x0) = 0 makes the triple (x0, x0, x1)
    # exactly tight, so a +1 bump on the diagonal must trip the check
    m = mdp.DiscreteGcMdp(next_state=[[0], [1]], goal_map=[[0], [1]], n_goals=2, gamma=0.9)
    q = mdp.q_star_pairwise(m)
    assert mdp.verify_triangle(m, q_pairs=q).passed
    q[0, 0] += 1.0
    report = mdp.verify_triangle(m, q_pairs=q)
    assert not report.passed
    assert report.n_violations > 0


def test_lift_of_exact_values_is_quasipseudometric():
    for m in mdp.make_corpus(9, 4, identity_goals=True):
        q = mdp.q_star_pairwise(m)
        report = quasimetric.check_lift(q, tol=1e-9)
        assert report.passed, str(report)


def test_sup_identity_injective_goal_map():
    # bijective (non-identity) goal map: the preimage max is a single term
    rng = np.random.default_rng(1)
    n_s, n_a = 3, 2
    perm = rng.permutation(n_s * n_a)
    m = mdp.DiscreteGcMdp(
        next_state=rng.integers(0, n_s, size=(n_s, n_a)),
        goal_map=perm.reshape(n_s, n_a),
        n_goals=n_s * n_a,
        gamma=0.9,
    )
    report = mdp.verify_sup_identity(m)
    assert report.passed
    assert report.max_discrepancy <= 1e-9


def test_sup_identity_self_maintaining_goal():
    # achieving pair self-loops: both sides are exactly zero
    m = mdp.DiscreteGcMdp(
        next_state=[[0, 1], [1, 0]], goal_map=[[0, 1], [1, 0]], n_goals=2, gamma=0.9
    )
    q_goals = mdp.q_star_goals(m)
    q_pairs = mdp.q_star_pairwise(m)
    assert q_goals[0, 0] == 0.0
    assert q_pairs[0, 0] == 0.0
    report = mdp.verify_sup_identity(m)
    assert report.dominance_holds


def test_sup_identity_counterexample_two_cycle():
    # both pairs of a 2-cycle achieve the single goal: the goal value is 0
    # (reward every step) but no single-pair value can beat -gamma/(1-gamma^2),
    # so the claimed equality genuinely fails while dominance holds
    m = mdp.DiscreteGcMdp(next_state=[[1], [0]], goal_map=[[0], [0]], n_goals=1, gamma=0.9)
    report = mdp.verify_sup_identity(m)
    assert report.dominance_holds
    assert not report.passed
    assert report.max_discrepancy == pytest.approx(0.9 / (1 - 0.81), abs=1e-8)


def test_sup_dominance_on_random_corpus():
    for m in mdp.make_corpus(77, 10, identity_goals=False):
        report = mdp.verify_sup_identity(m)
        assert report.dominance_holds, str(report)


def test_goal_map_must_be_onto():
    with pytest.raises(ValueError, match="onto"):
        mdp.DiscreteGcMdp(next_state=[[0], [1]], goal_map=[[0], [0]], n_goals=2, gamma=0.9)


def test_random_mdp_is_onto_and_non_injective():
    for seed in range(10):
        m = mdp.random_mdp(np.random.default_rng(seed), identity_goals=False)
        assert np.unique(m.goal_map).size == m.n_goals
        assert m.n_goals < m.n_x


def test_serialization_roundtrip(tmp_path):
    m = mdp.random_mdp(np.random.default_rng(3), gamma=0.98)
    path = tmp_path / "instance.txt"
    mdp.save_mdp(path, m)
    loaded = mdp.load_mdp(path)
    assert np.array_equal(loaded.next_state, m.next_state)
    assert np.array_equal(loaded.goal_map, m.goal_map)
    assert loaded.gamma == m.gamma
    assert loaded.n_goals == m.n_goals


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not an mdp\n")
    with pytest.raises(ValueError):
        mdp.load_mdp(path)


def test_value_iteration_rejects_bad_tol():
    with pytest.raises(ValueError):
        mdp.value_iteration(two_cycle(), 0, tol=0.0)
