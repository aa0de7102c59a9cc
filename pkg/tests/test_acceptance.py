"""Acceptance gate: one test per numbered criterion, each printing a
PASS/FAIL line (run with -s to see them).

Criterion 3 asserts the exact preimage-sup equality of the optimal values
and is expected to fail: the equality is false under non-terminating goal
semantics (see tests/test_mdp.py::test_sup_identity_counterexample_two_cycle
for the two-state counterexample).  The test states the criterion
faithfully rather than weakening it.
"""

import time

import numpy as np
import pytest

from mrn import cli, gcrl, mdp, nets, quasimetric, toyworld

SEEDS = (100, 200, 300, 400, 500)


def report(n, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\n[criterion {n}] {status} - {detail}")
    return ok


@pytest.fixture(scope="session")
def theory_corpus():
    mdps = mdp.make_corpus(14, 50, gammas=(0.9, 0.98), identity_goals=True)
    tables = [mdp.q_star_pairwise(m, tol=1e-10) for m in mdps]
    return mdps, tables


def test_criterion_1_triangle_inequality_of_optimal_values(theory_corpus):
    t0 = time.perf_counter()
    mdps, tables = theory_corpus
    assert len(mdps) >= 50
    assert {m.gamma for m in mdps} == {0.9, 0.98}
    assert all(m.n_states <= 6 and m.n_actions <= 3 for m in mdps)
    violations = 0
    worst = -np.inf
    for m, q in zip(mdps, tables):
        rep = mdp.verify_triangle(m, tol=1e-10, q_pairs=q)
        assert rep.slack == pytest.approx(1e-9)
        violations += rep.n_violations
        worst = max(worst, rep.worst_margin)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60.0
    assert report(
        1, ok,
        f"{len(mdps)} MDPs, {violations} triangle violations, worst margin "
        f"{worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_lifted_values_are_quasipseudometric(theory_corpus):
    mdps, tables = theory_corpus
    all_pass = True
    exact = True
    for q in tables:
        rep = quasimetric.check_lift(q, tol=1e-9)
        all_pass = all_pass and rep.passed
        lifted = quasimetric.lift_qstar(q)
        n = q.shape[0]
        for x in range(n):
            for y in range(n):
                if lifted[x, quasimetric.embedded_goal_index(x, y, n)] != q[x, y]:
                    exact = False
    ok = all_pass and exact
    assert report(
        2, ok,
        f"axioms on {len(tables)} lifted tables (tol 1e-9): "
        f"{'all pass' if all_pass else 'violations'}; embedding equality "
        f"{'exact' if exact else 'BROKEN'}",
    )


def test_criterion_3_preimage_sup_equality():
    corpus = mdp.make_corpus(15, 20, gammas=(0.9, 0.98), identity_goals=False)
    assert len(corpus) >= 20
    assert all(m.n_goals < m.n_x for m in corpus)
    worst = 0.0
    dominance_ok = True
    for m in corpus:
        rep = mdp.verify_sup_identity(m, tol=1e-10)
        worst = max(worst, rep.max_discrepancy)
        dominance_ok = dominance_ok and rep.dominance_holds
    ok = worst <= 1e-9
    report(
        3, ok,
        f"max |Q*(x,g) - preimage max| = {worst:.3g} over {len(corpus)} MDPs "
        f"(dominance direction holds: {dominance_ok}); the exact equality is "
        "false under non-terminating goal semantics - see decisions ledger",
    )
    assert ok, (
        "the preimage-sup equality fails on corpus instances whose optimal "
        "cycles collect reward at several preimage pairs; this is a defect "
        "of the claimed identity, not of the solver (dominance direction "
        f"holds: {dominance_ok})"
    )


def _random_metric_head(rng):
    latent = int(rng.integers(3, 10))
    width = int(rng.integers(6, 24))
    m_dim = int(rng.integers(2, 7))
    k_dim = int(rng.integers(2, 7))
    return nets.MrnHead(
        sym=nets.Mlp(latent, [width], m_dim, rng),
        asym=nets.Mlp(latent, [width], k_dim, rng),
        sym_reduction="euclidean",
    ), latent


def test_criterion_4_head_axiom_property_suite():
    rng = np.random.default_rng(21)
    n_heads = 100
    n_triples = 10_000
    worst_triangle = -np.inf
    identity_exact = True
    nonneg_ok = True
    for _ in range(n_heads):
        head, latent = _random_metric_head(rng)
        pts = rng.normal(size=(n_triples, 3, latent))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        dxy = head.distance_np(x, y)
        dyz = head.distance_np(y, z)
        dxz = head.distance_np(x, z)
        dxx = head.distance_np(x, x)
        if dxx.max() != 0.0 or dxx.min() != 0.0:
            identity_exact = False
        if min(dxy.min(), dyz.min(), dxz.min()) < 0:
            nonneg_ok = False
        worst_triangle = max(worst_triangle, float((dxz - dxy - dyz).max()))
    axioms_ok = identity_exact and nonneg_ok and worst_triangle <= 1e-9

    # fault injection: every corrupted table must be caught
    faults_caught = 0
    n_faults = 20
    for trial in range(n_faults):
        frng = np.random.default_rng(1000 + trial)
        head, latent = _random_metric_head(frng)
        pts = frng.normal(size=(40, latent))
        ii, jj = np.meshgrid(np.arange(40), np.arange(40), indexing="ij")
        table = head.distance_np(pts[ii.ravel()], pts[jj.ravel()]).reshape(40, 40)
        i, j = 3, 17
        through = (table[i, :] + table[:, j]).min()
        table[i, j] = through + 0.5
        rep = quasimetric.check_axioms(table, tol=1e-9, exhaustive=True)
        tri = next(c for c in rep.checks if c.axiom == "triangle")
        if tri.count > 0 and not rep.passed:
            faults_caught += 1
    ok = axioms_ok and faults_caught == n_faults
    assert report(
        4, ok,
        f"{n_heads} heads x {n_triples} triples: identity exact={identity_exact}, "
        f"nonneg={nonneg_ok}, worst triangle margin {worst_triangle:.2e}; "
        f"fault injections caught {faults_caught}/{n_faults}",
    )


def test_criterion_5_gradients_match_finite_differences():
    reports = nets.gradcheck_battery(seed=3, trials=105, step=1e-5, tol=1e-4)
    worst = max(r.max_rel_err for _, r in reports)
    n_fail = sum(not r.passed for _, r in reports)
    covered = {name.split("[")[0] for name, _ in reports}
    ok = n_fail == 0 and covered >= set(nets.VARIANTS) | {"actor-loss"}
    assert report(
        5, ok,
        f"{len(reports)} random parameterizations across {len(covered)} cases, "
        f"worst rel err {worst:.2e} (tol 1e-4), {n_fail} failures",
    )


def test_criterion_6_toy_oracle_axioms_and_asymmetry():
    world = toyworld.ToyWorld(eta=0.15, grid_n=24)
    table = world.distance_table()
    rep = quasimetric.check_axioms(table, tol=1e-12, exhaustive=True)

    sym_world = toyworld.ToyWorld(eta=1.0, grid_n=24)
    sym_table = sym_world.distance_table()
    sym_exact = np.abs(sym_table - sym_table.T).max() == 0.0

    witnesses = True
    for eta in (0.1, 0.2):
        w = toyworld.ToyWorld(eta=eta, grid_n=64)
        down = toyworld.oracle_distance(w, (0.5, 0.8), (0.5, 0.3))
        up = toyworld.oracle_distance(w, (0.5, 0.3), (0.5, 0.8))
        witnesses = witnesses and down > up
    ok = rep.passed and sym_exact and witnesses
    assert report(
        6, ok,
        f"axioms exhaustive on {table.shape[0]} nodes (tol 1e-12): {rep.passed}; "
        f"eta=1 symmetry exact: {sym_exact}; asymmetric witnesses at eta<=0.2: "
        f"{witnesses}",
    )


@pytest.fixture(scope="session")
def toy_study():
    t0 = time.perf_counter()
    fit_cfg = toyworld.ToyFitConfig(lr=1e-3, iterations=300)
    etas = (0.1, 0.25, 0.5, 1.0)
    datasets = {}
    for eta in etas:
        world = toyworld.ToyWorld(eta=eta, grid_n=64)
        datasets[eta] = toyworld.make_dataset(world, np.random.default_rng(42))

    med_gen = {}
    for eta in etas:
        best = [
            toyworld.fit_regression(
                toyworld.make_toy_model("mrn", np.random.default_rng(s)),
                datasets[eta], fit_cfg,
            ).best_gen
            for s in SEEDS
        ]
        med_gen[eta] = float(np.median(best))

    sym_only = [
        toyworld.fit_regression(
            toyworld.make_toy_model("mrn-sym-only", np.random.default_rng(s)),
            datasets[0.1], fit_cfg,
        ).best_gen
        for s in SEEDS
    ]

    k_values = (0, 1, 8, 64, 176)
    k_rows = toyworld.approximation_vs_k(datasets[0.1], k_values, SEEDS, fit_cfg)
    med_train = {
        k: float(np.median([r["best_train"] for r in k_rows if r["K"] == k]))
        for k in k_values
    }
    elapsed = time.perf_counter() - t0
    return med_gen, float(np.median(sym_only)), med_train, elapsed


def test_criterion_7_toy_trend_replication(toy_study):
    med_gen, sym_only_med, med_train, elapsed = toy_study
    etas = sorted(med_gen)
    gen_monotone = all(
        med_gen[b] <= med_gen[a] * 1.10 for a, b in zip(etas, etas[1:])
    )
    mrn_beats_sym = med_gen[0.1] < sym_only_med
    ks = sorted(med_train)
    train_monotone = all(
        med_train[b] <= med_train[a] * 1.10 for a, b in zip(ks, ks[1:])
    )
    ok = gen_monotone and mrn_beats_sym and train_monotone and elapsed < 600
    assert report(
        7, ok,
        f"(a) gen error vs eta {[f'{med_gen[e]:.4f}' for e in etas]} "
        f"non-increasing(10%): {gen_monotone}; "
        f"(b) mrn {med_gen[0.1]:.4f} < sym-only {sym_only_med:.4f}: {mrn_beats_sym}; "
        f"(c) train error vs K {[f'{med_train[k]:.2e}' for k in ks]} "
        f"non-increasing(10%): {train_monotone}; {elapsed:.0f}s (< 600s)",
    )


def test_criterion_10_byte_identical_reruns(tmp_path):
    args = [
        "train", "--archs", "mrn", "--seeds", "17", "--epochs", "2",
        "--episodes-per-epoch", "4", "--cycles-per-epoch", "2",
        "--updates-per-cycle", "2", "--batch-size", "16",
        "--eval-rollouts", "8", "--buffer-episodes", "64",
    ]
    pairs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert cli.main(args + ["--out", str(out)]) == 0
        pairs.append(out)
    train_same = all(
        (pairs[0] / n).read_bytes() == (pairs[1] / n).read_bytes()
        for n in ("curve_mrn_17.csv", "summary.csv")
    )

    toy_args = [
        "toy", "--etas", "0.5", "--k-values", "0", "--seeds", "1",
        "--grid-n", "10", "--iterations", "4", "--archs", "mrn",
    ]
    toy_pairs = []
    for sub in ("ta", "tb"):
        out = tmp_path / sub
        assert cli.main(toy_args + ["--out", str(out)]) == 0
        toy_pairs.append(out)
    toy_same = (toy_pairs[0] / "toy_curves.csv").read_bytes() == (
        toy_pairs[1] / "toy_curves.csv"
    ).read_bytes()
    ok = train_same and toy_same
    assert report(
        10, ok,
        f"train rerun byte-identical: {train_same}; toy rerun byte-identical: {toy_same}",
    )
