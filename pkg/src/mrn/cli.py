"""Operator entry point.

Subcommands: gradcheck, verify-theory, toy, train, eval.  Settings come
from defaults, then an optional config file section, then CLI flags.
Exit codes: 0 ok, 1 check failure or aborted run, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import gcrl, mdp, nets, quasimetric, toyworld

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def run_gradcheck(cfg, out_dir):
    reports = nets.gradcheck_battery(
        seed=cfg["seed"], trials=cfg["trials"], step=cfg["step"], tol=cfg["tol"]
    )
    worst = max(r.max_rel_err for _, r in reports)
    n_fail = sum(not r.passed for _, r in reports)
    with open(out_dir / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "max_rel_err", "n_checked", "passed"])
        for name, r in reports:
            w.writerow([name, repr(r.max_rel_err), r.n_checked, int(r.passed)])
    print(f"gradcheck: {len(reports)} cases, worst rel err {worst:.3e}, {n_fail} failures")
    return n_fail == 0


# ---------------------------------------------------------------------------
# verify-theory
# ---------------------------------------------------------------------------

def run_verify_theory(cfg, out_dir):
    tol = cfg["tol"]
    gammas = tuple(cfg["gammas"])
    rows = []
    ok = True

    corpus = mdp.make_corpus(2 * cfg["corpus_seed"], cfg["n_mdps"], gammas, identity_goals=True)
    tri_viol = 0
    for i, m in enumerate(corpus):
        q = mdp.q_star_pairwise(m, tol=tol)
        tri = mdp.verify_triangle(m, tol=tol, q_pairs=q)
        tri_viol += tri.n_violations
        rows.append(["triangle", i, m.gamma, m.n_x, int(tri.passed), repr(tri.worst_margin)])

        lift_rep = quasimetric.check_lift(q, tol=10 * tol)
        rows.append(
            ["lift-axioms", i, m.gamma, m.n_x, int(lift_rep.passed),
             repr(max(c.worst_margin for c in lift_rep.checks))]
        )
        lifted = quasimetric.lift_qstar(q)
        n = q.shape[0]
        exact = all(
            lifted[x, quasimetric.embedded_goal_index(x, y, n)] == q[x, y]
            for x in range(n)
            for y in range(n)
        )
        rows.append(["lift-embedding", i, m.gamma, m.n_x, int(exact), "0.0"])
        ok = ok and tri.passed and lift_rep.passed and exact

    sup_corpus = mdp.make_corpus(
        2 * cfg["corpus_seed"] + 1, cfg["n_sup_mdps"], gammas, identity_goals=False
    )
    eq_holds = 0
    worst_eq = 0.0
    for i, m in enumerate(sup_corpus):
        rep = mdp.verify_sup_identity(m, tol=tol)
        rows.append(
            ["sup-dominance", i, m.gamma, m.n_x, int(rep.dominance_holds),
             repr(rep.max_dominance_violation)]
        )
        rows.append(
            ["sup-equality", i, m.gamma, m.n_x, int(rep.passed), repr(rep.max_discrepancy)]
        )
        ok = ok and rep.dominance_holds
        eq_holds += int(rep.passed)
        worst_eq = max(worst_eq, rep.max_discrepancy)

    with open(out_dir / "theory_report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "instance", "gamma", "n_x", "passed", "worst_margin"])
        w.writerows(rows)

    print(f"triangle: {len(corpus)} MDPs, {tri_viol} violations")
    print(f"lift: axioms and embedding identity checked on {len(corpus)} MDPs")
    print(
        f"sup identity: dominance (Q*(x,g) >= max over preimage) checked on "
        f"{len(sup_corpus)} MDPs; exact equality held on {eq_holds}/{len(sup_corpus)} "
        f"(worst discrepancy {worst_eq:.3g})"
    )
    print(
        "note: the exact sup equality fails on instances whose optimal cycles"
        " collect reward at several preimage pairs; only the dominance"
        " direction gates the exit code"
    )
    return ok


# ---------------------------------------------------------------------------
# toy
# ---------------------------------------------------------------------------

def run_toy(cfg, out_dir):
    fit_cfg = toyworld.ToyFitConfig(lr=cfg["lr"], iterations=cfg["iterations"])
    all_rows = []
    summary = []
    datasets = {}
    for eta in cfg["etas"]:
        world = toyworld.ToyWorld(eta=eta, grid_n=cfg["grid_n"])
        datasets[eta] = toyworld.make_dataset(world, np.random.default_rng(cfg["dataset_seed"]))

    for eta in cfg["etas"]:
        for arch in cfg["archs"]:
            best = []
            for seed in cfg["seeds"]:
                model = toyworld.make_toy_model(arch, np.random.default_rng(seed))
                res = toyworld.fit_regression(model, datasets[eta], fit_cfg)
                k = nets.Sizes().asym_dim if arch == "mrn" else 0
                all_rows.extend(toyworld.curve_rows(arch, eta, k, seed, res))
                best.append(res.best_gen)
            summary.append(
                {"study": "eta", "arch": arch, "eta": eta, "K": "",
                 "median_best_gen": float(np.median(best))}
            )

    k_eta = min(cfg["etas"])
    for k in cfg["k_values"]:
        best_train = []
        for seed in cfg["seeds"]:
            model = toyworld.make_toy_model("mrn", np.random.default_rng(seed), k=k)
            res = toyworld.fit_regression(model, datasets[k_eta], fit_cfg)
            all_rows.extend(toyworld.curve_rows("mrn", k_eta, k, seed, res))
            best_train.append(res.best_train)
        summary.append(
            {"study": "K", "arch": "mrn", "eta": k_eta, "K": k,
             "median_best_train": float(np.median(best_train))}
        )

    toyworld.write_curves_csv(out_dir / "toy_curves.csv", all_rows)
    with open(out_dir / "toy_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["study", "arch", "eta", "K", "median_best_gen", "median_best_train"])
        for s in summary:
            w.writerow(
                [s["study"], s["arch"], repr(float(s["eta"])), s["K"],
                 repr(s.get("median_best_gen", "")) if "median_best_gen" in s else "",
                 repr(s.get("median_best_train", "")) if "median_best_train" in s else ""]
            )
    for s in summary:
        print(s)
    return True


# ---------------------------------------------------------------------------
# train / eval
# ---------------------------------------------------------------------------

def _train_one(args):
    arch, seed, cfg = args
    tc = gcrl.TrainConfig(
        arch=arch,
        seed=seed,
        epochs=cfg["epochs"],
        episodes_per_epoch=cfg["episodes_per_epoch"],
        cycles_per_epoch=cfg["cycles_per_epoch"],
        updates_per_cycle=cfg["updates_per_cycle"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        gamma=cfg["gamma"],
        polyak=cfg["polyak"],
        noise_sigma=cfg["noise_sigma"],
        random_eps=cfg["random_eps"],
        action_l2=cfg["action_l2"],
        future_p=cfg["future_p"],
        buffer_episodes=cfg["buffer_episodes"],
        eval_rollouts=cfg["eval_rollouts"],
        wall=cfg["wall"],
        early_stop_success=cfg["early_stop_success"],
        sym_reduction=cfg["sym_reduction"],
    )
    result = gcrl.train(tc)
    return arch, seed, result.rows, result.agent.state()


def run_train(cfg, out_dir):
    jobs = [(arch, seed, cfg) for arch in cfg["archs"] for seed in cfg["seeds"]]
    results = []
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]

    runs = []
    for arch, seed, rows, state in results:
        gcrl.write_curve_csv(out_dir / f"curve_{arch}_{seed}.csv", rows)
        if cfg["save_checkpoints"]:
            nets.save_params(out_dir / f"checkpoint_{arch}_{seed}.npz", state)
        runs.append(rows)
        print(f"{arch} seed {seed}: final success {rows[-1]['success_rate']:.2f} "
              f"after {len(rows)} epochs")
    summary = emit_summary(runs)
    write_summary_csv(out_dir / "summary.csv", summary)
    return True


def run_eval(cfg, out_dir):
    if not cfg["checkpoint"]:
        raise cfgmod.ConfigError("eval requires a checkpoint path")
    path = Path(cfg["checkpoint"])
    if not path.exists():
        raise cfgmod.ConfigError(f"checkpoint not found: {path}")
    state = nets.load_params(path)
    arch = str(state.get("critic.variant", cfg["arch"]))
    env = gcrl.PointMassEnv(wall=cfg["wall"])
    agent = gcrl.DdpgAgent(env, arch=arch, rng=np.random.default_rng(0))
    agent.load_state(state)
    rate = gcrl.evaluate(env, agent, cfg["n_rollouts"], np.random.default_rng(cfg["seed"]))
    with open(out_dir / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "checkpoint", "n_rollouts", "success_rate"])
        w.writerow([arch, path.name, cfg["n_rollouts"], repr(rate)])
    print(f"success rate: {rate}")
    return True


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def emit_summary(runs):
    """Aggregate per-epoch success across seeds: population mean and std
    per (arch, epoch).  All runs of one arch must share the same epoch
    grid; duplicate (arch, seed) runs are rejected."""
    by_arch = {}
    seen = set()
    for rows in runs:
        if not rows:
            raise ValueError("cannot aggregate an empty run")
        arch = rows[0]["arch"]
        seed = rows[0]["seed"]
        if (arch, seed) in seen:
            raise ValueError(f"duplicate run for arch {arch} seed {seed}")
        seen.add((arch, seed))
        by_arch.setdefault(arch, []).append(rows)
    out = []
    for arch in sorted(by_arch):
        arch_runs = by_arch[arch]
        epochs = [r["epoch"] for r in arch_runs[0]]
        for rows in arch_runs[1:]:
            if [r["epoch"] for r in rows] != epochs:
                raise ValueError(f"mixed epoch grids for arch {arch}: cannot aggregate")
        for i, epoch in enumerate(epochs):
            vals = np.array([rows[i]["success_rate"] for rows in arch_runs])
            out.append(
                {
                    "arch": arch,
                    "epoch": epoch,
                    "mean_success": float(vals.mean()),
                    "std_success": float(vals.std()),  # population std
                    "n_seeds": len(vals),
                }
            )
    return out


def write_summary_csv(path, summary):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "epoch", "mean_success", "std_success", "n_seeds"])
        for row in summary:
            w.writerow(
                [row["arch"], row["epoch"], repr(row["mean_success"]),
                 repr(row["std_success"]), row["n_seeds"]]
            )


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

_RUNNERS = {
    "gradcheck": run_gradcheck,
    "verify-theory": run_verify_theory,
    "toy": run_toy,
    "train": run_train,
    "eval": run_eval,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="mrn")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in cfgmod.SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="config file (ini-style sections)")
        for key in schema:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        schema = cfgmod.SCHEMAS[command]
        overrides = {}
        for key, (type_name, _) in schema.items():
            raw = getattr(args, key)
            if raw is not None:
                overrides[key] = cfgmod._PARSERS[type_name](raw)
        cfg = cfgmod.resolve(command, args.config, overrides)
        out_dir = cfgmod.output_dir(cfg, command)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfgmod.snapshot(command, cfg, out_dir)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        ok = _RUNNERS[command](cfg, out_dir)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except RuntimeError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK if ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
