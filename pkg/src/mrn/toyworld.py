"""Asymmetric shortest-path toy world and supervised distance regression.

The world is the unit square discretised to a grid.  A white frame of
width eta hugs the border and is freely traversable; in the indigo
interior, moves may never decrease the height (the y coordinate).  The
shortest-path length under these rules is a quasipseudometric; Dijkstra
on the 8-connected grid graph is the oracle for it.  Models regress to
the oracle from 20 training pairs and are scored on held-out pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels, nets

_OFFSETS = [
    (1, 0, False),
    (-1, 0, False),
    (0, 1, False),
    (0, -1, False),
    (1, 1, True),
    (1, -1, True),
    (-1, 1, True),
    (-1, -1, True),
]


class ToyWorld:
    """Grid discretisation of the eta-frame world.

    Nodes sit at coordinates (ix, iy) * spacing; a node is white when its
    distance to the nearest border is below eta, indigo otherwise.  Edges
    leave a white node in all 8 directions and an indigo node only in
    height-non-decreasing ones; edge cost is the Euclidean step length.
    """

    def __init__(self, eta, grid_n=64):
        if not 0 < eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {eta}")
        if grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        self.eta = float(eta)
        self.grid_n = int(grid_n)
        self.spacing = 1.0 / (grid_n - 1)
        ix, iy = np.meshgrid(np.arange(grid_n), np.arange(grid_n), indexing="xy")
        self.xs = (ix * self.spacing).ravel()
        self.ys = (iy * self.spacing).ravel()
        border = np.minimum.reduce([self.xs, self.ys, 1.0 - self.xs, 1.0 - self.ys])
        self.white = border < self.eta
        self.n_nodes = grid_n * grid_n
        self._graph = None
        self._source_cache = {}

    # -- graph ---------------------------------------------------------------
    def graph(self):
        if self._graph is None:
            self._graph = self._build_graph()
        return self._graph

    def _build_graph(self):
        n = self.grid_n
        ids = np.arange(self.n_nodes).reshape(n, n)  # [iy, ix]
        srcs, dsts, diags = [], [], []
        for dx, dy, diag in _OFFSETS:
            sy = slice(max(0, -dy), n - max(0, dy))
            sx = slice(max(0, -dx), n - max(0, dx))
            ty = slice(max(0, dy), n + min(0, dy))
            tx = slice(max(0, dx), n + min(0, dx))
            u = ids[sy, sx].ravel()
            v = ids[ty, tx].ravel()
            allowed = self.white[u] | (dy >= 0)
            srcs.append(u[allowed])
            dsts.append(v[allowed])
            diags.append(np.full(allowed.sum(), diag, dtype=np.uint8))
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
        diag = np.concatenate(diags)
        order = np.argsort(src, kind="stable")
        src, dst, diag = src[order], dst[order], diag[order]
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n_nodes), out=indptr[1:])
        return indptr, dst.astype(np.int64), diag

    # -- oracle ---------------------------------------------------------------
    def snap(self, p):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (2,):
            raise ValueError(f"point must be 2-d, got shape {p.shape}")
        if p.min() < 0 or p.max() > 1:
            raise ValueError(f"point {p} outside the unit square")
        ix = int(round(p[0] / self.spacing))
        iy = int(round(p[1] / self.spacing))
        return iy * self.grid_n + ix

    def distances_from(self, node):
        cached = self._source_cache.get(node)
        if cached is None:
            indptr, indices, diag = self.graph()
            ns, nd = kernels.dijkstra_counts(indptr, indices, diag, node)
            cached = kernels.counts_to_distance(ns, nd, self.spacing)
            self._source_cache[node] = cached
        return cached

    def distance_table(self):
        return np.stack([self.distances_from(i) for i in range(self.n_nodes)])


def oracle_distance(world, x0, xg):
    """Shortest-path length from x0 to xg (snapped to grid nodes); +inf
    when unreachable."""
    src = world.snap(x0)
    dst = world.snap(xg)
    return float(world.distances_from(src)[dst])


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class ToyDataset:
    train_x: np.ndarray  # (n_train, 4): x0 then xg
    train_d: np.ndarray
    eval_x: np.ndarray
    eval_d: np.ndarray

    def __post_init__(self):
        train_keys = {tuple(row) for row in self.train_x}
        eval_keys = {tuple(row) for row in self.eval_x}
        if train_keys & eval_keys:
            raise ValueError("train and eval pairs overlap")
        if not (np.isfinite(self.train_d).all() and np.isfinite(self.eval_d).all()):
            raise ValueError("dataset contains non-finite targets")


def make_dataset(world, rng, n_train=20, n_eval=10000):
    pairs = rng.uniform(0.0, 1.0, size=(n_train + n_eval, 4))
    # regenerate any duplicated rows so train/eval stay disjoint
    while True:
        _, first = np.unique(pairs, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(len(pairs)), first)
        if dup.size == 0:
            break
        pairs[dup] = rng.uniform(0.0, 1.0, size=(dup.size, 4))
    targets = oracle_targets(world, pairs)
    return ToyDataset(
        train_x=pairs[:n_train],
        train_d=targets[:n_train],
        eval_x=pairs[n_train:],
        eval_d=targets[n_train:],
    )


def oracle_targets(world, pairs):
    src = np.array([world.snap(p) for p in pairs[:, :2]])
    dst = np.array([world.snap(p) for p in pairs[:, 2:]])
    out = np.empty(len(pairs))
    for i, (s, d) in enumerate(zip(src, dst)):
        out[i] = world.distances_from(int(s))[int(d)]
    return out


# ---------------------------------------------------------------------------
# regression models: the architectures applied directly to point pairs
# (no actions here; the distance net consumes x0 and xg)
# ---------------------------------------------------------------------------

class ToyMrn:
    """The quasipseudometric head applied straight to the two points."""

    def __init__(self, head):
        self.head = head

    def predict(self, x0, xg):
        return self.head.distance(x0, xg)

    def predict_np(self, x0, xg):
        return self.head.distance_np(x0, xg)

    def params(self):
        return self.head.params()


class ToyMonolithic:
    def __init__(self, net):
        self.net = net

    def predict(self, x0, xg):
        return ad.reshape(self.net.forward(ad.cat([x0, xg])), (-1,))

    def predict_np(self, x0, xg):
        return self.net.forward_np(np.concatenate([x0, xg], axis=-1)).reshape(-1)

    def params(self):
        return self.net.params()


class ToyBvn:
    def __init__(self, f, phi):
        self.f = f
        self.phi = phi

    def predict(self, x0, xg):
        return ad.sum_last(ad.mul(self.f.forward(x0), self.phi.forward(xg)))

    def predict_np(self, x0, xg):
        return (self.f.forward_np(x0) * self.phi.forward_np(xg)).sum(axis=-1)

    def params(self):
        return self.f.params() + self.phi.params()


def make_toy_model(variant, rng, sizes=None, k=None, dtype=np.float32):
    sizes = sizes or nets.Sizes()
    if variant == "mrn":
        k = sizes.asym_dim if k is None else int(k)
        sym = nets.Mlp(2, [sizes.head_width], sizes.embed_dim, rng, dtype=dtype)
        asym = (
            nets.Mlp(2, [sizes.head_width], k, rng, dtype=dtype) if k > 0 else None
        )
        return ToyMrn(nets.MrnHead(sym=sym, asym=asym, sym_reduction=sizes.sym_reduction))
    if variant == "mrn-sym-only":
        sym = nets.Mlp(2, [sizes.solo_head_width], sizes.embed_dim, rng, dtype=dtype)
        return ToyMrn(nets.MrnHead(sym=sym, sym_reduction=sizes.sym_reduction))
    if variant == "mrn-asym-only":
        k = sizes.asym_dim if k is None else int(k)
        asym = nets.Mlp(2, [sizes.solo_head_width], max(k, 1), rng, dtype=dtype)
        return ToyMrn(nets.MrnHead(asym=asym))
    if variant == "monolithic":
        return ToyMonolithic(
            nets.Mlp(4, [sizes.monolithic_width] * sizes.monolithic_layers, 1, rng, dtype=dtype)
        )
    if variant == "bvn":
        f = nets.Mlp(2, [sizes.bvn_width] * sizes.bvn_layers, sizes.embed_dim, rng, dtype=dtype)
        phi = nets.Mlp(2, [sizes.bvn_width] * sizes.bvn_layers, sizes.embed_dim, rng, dtype=dtype)
        return ToyBvn(f, phi)
    raise ValueError(f"unknown toy variant {variant!r}")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class ToyFitConfig:
    lr: float = 1e-3
    iterations: int = 400
    eval_every: int = 1


@dataclass
class FitResult:
    train_mse: np.ndarray
    gen_mse: np.ndarray
    best_gen: float
    best_iter: int
    best_train: float
    model: object = field(repr=False, default=None)


def fit_regression(model, dataset, config=None):
    """Full-batch Adam regression of the model onto the oracle targets.

    Logs train MSE and generalization MSE (on the held-out pairs) per
    iteration and reports the minimum generalization error with the
    iteration that reached it.  Aborts on non-finite loss.
    """
    config = config or ToyFitConfig()
    dtype = model.params()[0].data.dtype
    x0 = ad.Tensor(dataset.train_x[:, :2], dtype=dtype)
    xg = ad.Tensor(dataset.train_x[:, 2:], dtype=dtype)
    target = ad.Tensor(dataset.train_d, dtype=dtype)
    ex0 = dataset.eval_x[:, :2].astype(dtype)
    exg = dataset.eval_x[:, 2:].astype(dtype)
    eval_d = dataset.eval_d.astype(dtype)
    opt = nets.Adam(model.params(), lr=config.lr)

    train_curve = np.empty(config.iterations)
    gen_curve = np.empty(config.iterations)
    for it in range(config.iterations):
        pred = model.predict(x0, xg)
        loss = ad.mean_all(ad.square(ad.sub(pred, target)))
        train_mse = float(loss.data)
        if not np.isfinite(train_mse):
            raise RuntimeError(
                f"regression diverged at iteration {it}: train mse {train_mse}"
            )
        if it % config.eval_every == 0:
            err = (model.predict_np(ex0, exg) - eval_d).astype(np.float64)
            gen = float(np.mean(err * err))
        train_curve[it] = train_mse
        gen_curve[it] = gen
        opt.zero_grad()
        loss.backward()
        opt.step()

    best_iter = int(np.argmin(gen_curve))
    return FitResult(
        train_mse=train_curve,
        gen_mse=gen_curve,
        best_gen=float(gen_curve[best_iter]),
        best_iter=best_iter,
        best_train=float(train_curve.min()),
        model=model,
    )


def approximation_vs_k(dataset, k_values, seeds, config=None, sizes=None):
    """Best training MSE under a fixed iteration budget for each asym
    width K; returns one row per (K, seed)."""
    if list(k_values) != sorted(k_values):
        raise ValueError("K values must be ascending")
    rows = []
    for k in k_values:
        for seed in seeds:
            model = make_toy_model("mrn", np.random.default_rng(seed), sizes=sizes, k=k)
            res = fit_regression(model, dataset, config)
            rows.append(
                {
                    "K": int(k),
                    "seed": int(seed),
                    "best_train": res.best_train,
                    "best_gen": res.best_gen,
                    "best_iter": res.best_iter,
                }
            )
    return rows


def write_curves_csv(path, rows):
    """Rows: dicts with keys arch, eta, K, seed, iteration, train_mse, gen_mse."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "eta", "K", "seed", "iteration", "train_mse", "gen_mse"])
        for r in rows:
            w.writerow(
                [
                    r["arch"],
                    repr(float(r["eta"])),
                    r["K"],
                    r["seed"],
                    r["iteration"],
                    repr(float(r["train_mse"])),
                    repr(float(r["gen_mse"])),
                ]
            )


def curve_rows(arch, eta, k, seed, result):
    rows = []
    for it in range(len(result.train_mse)):
        rows.append(
            {
                "arch": arch,
                "eta": eta,
                "K": k,
                "seed": seed,
                "iteration": it,
                "train_mse": result.train_mse[it],
                "gen_mse": result.gen_mse[it],
            }
        )
    return rows
