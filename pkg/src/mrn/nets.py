"""Critic and actor architectures with parameter-count parity across variants.

Variants: monolithic MLP, bilinear (BVN), and the quasipseudometric critic
(MRN) with its sym-only / asym-only / SAG ablations.  All variants share
the same sizing table so their parameter counts stay within a few percent
of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

VARIANTS = (
    "monolithic",
    "bvn",
    "mrn",
    "mrn-sym-only",
    "mrn-asym-only",
    "mrn-sag",
)

PARAMS_FORMAT = "mrn-params-v1"


class Mlp:
    """Fully connected stack: hidden layers use relu, output is linear
    unless ``out_activation='relu'`` (used by the latent encoders)."""

    def __init__(self, in_dim, hidden, out_dim, rng=None, out_activation=None, dtype=np.float64):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.out_activation = out_activation
        self.layers = []
        dims = [in_dim] + list(hidden) + [out_dim]
        rng = rng if rng is not None else np.random.default_rng()
        for a, b in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(a) if a > 0 else 0.0
            w = Tensor(rng.uniform(-bound, bound, size=(a, b)), requires_grad=True, dtype=dtype)
            bias = Tensor(rng.uniform(-bound, bound, size=b), requires_grad=True, dtype=dtype)
            self.layers.append((w, bias))

    def forward(self, x):
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = ad.linear(h, w, b)
            if i < last or self.out_activation == "relu":
                h = ad.relu(h)
        return h

    def forward_np(self, x):
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.data
            h += b.data
            if i < last or self.out_activation == "relu":
                np.maximum(h, 0, out=h)
        return h

    def params(self):
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out

    def param_count(self):
        return sum(p.data.size for p in self.params())

    def state(self, prefix):
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{prefix}.{i}.w"] = w.data
            out[f"{prefix}.{i}.b"] = b.data
        return out

    def load_state(self, state, prefix):
        for i, (w, b) in enumerate(self.layers):
            w.data = np.array(state[f"{prefix}.{i}.w"], dtype=w.data.dtype)
            b.data = np.array(state[f"{prefix}.{i}.b"], dtype=b.data.dtype)


class MrnHead:
    """The distance head d(x, y) = d_sym + d_asym over latents, with both
    nets applied to x and y with shared weights.

    d_asym = max_i relu(h_i(x) - h_i(y)) is a quasipseudometric for any
    weights.  d_sym comes in three forms: 'mean' and 'sum' are the mean /
    sum of squared embedding differences (the squared form used by the
    published architecture), 'euclidean' is the plain L2 distance.  Only
    'euclidean' is a true metric: squared distances violate the triangle
    inequality (collinear embeddings give d(a,c) = 4 while
    d(a,b) + d(b,c) = 2), so only the euclidean form yields a head that
    satisfies all three quasipseudometric axioms.
    """

    def __init__(self, sym=None, asym=None, sym_reduction="mean"):
        if sym is None and asym is None:
            raise ValueError("head needs at least one of sym/asym")
        if sym_reduction not in ("mean", "sum", "euclidean"):
            raise ValueError(f"unknown sym_reduction {sym_reduction!r}")
        self.sym = sym
        self.asym = asym
        self.sym_reduction = sym_reduction

    def distance(self, x, y):
        parts = []
        if self.sym is not None:
            diff = ad.sub(self.sym.forward(x), self.sym.forward(y))
            sq = ad.square(diff)
            if self.sym_reduction == "mean":
                parts.append(ad.mean_last(sq))
            elif self.sym_reduction == "sum":
                parts.append(ad.sum_last(sq))
            else:
                parts.append(ad.sqrt(ad.sum_last(sq)))
        if self.asym is not None:
            diff = ad.sub(self.asym.forward(x), self.asym.forward(y))
            parts.append(ad.max_last(ad.relu(diff)))
        return parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])

    def distance_np(self, x, y):
        total = None
        if self.sym is not None:
            diff = self.sym.forward_np(x) - self.sym.forward_np(y)
            sq = diff * diff
            if self.sym_reduction == "mean":
                total = sq.mean(axis=-1)
            elif self.sym_reduction == "sum":
                total = sq.sum(axis=-1)
            else:
                total = np.sqrt(sq.sum(axis=-1))
        if self.asym is not None:
            diff = self.asym.forward_np(x) - self.asym.forward_np(y)
            d_asym = np.maximum(diff, 0).max(axis=-1)
            total = d_asym if total is None else total + d_asym
        return total

    def params(self):
        out = []
        if self.sym is not None:
            out.extend(self.sym.params())
        if self.asym is not None:
            out.extend(self.asym.params())
        return out

    def param_count(self):
        return sum(p.data.size for p in self.params())

    def state(self, prefix="head"):
        out = {}
        if self.sym is not None:
            out.update(self.sym.state(f"{prefix}.sym"))
        if self.asym is not None:
            out.update(self.asym.state(f"{prefix}.asym"))
        return out

    def load_state(self, state, prefix="head"):
        if self.sym is not None:
            self.sym.load_state(state, f"{prefix}.sym")
        if self.asym is not None:
            self.asym.load_state(state, f"{prefix}.asym")


class MrnCritic:
    """Encoders e1(s,a) and e2(s,g) project into a shared latent space; the
    head turns the two latents into a non-negative distance, and
    Q = -distance, so Q <= 0 for every input and weight setting."""

    variant = "mrn"

    def __init__(self, e1, e2, head, sag=False):
        self.e1 = e1
        self.e2 = e2
        self.head = head
        self.sag = sag

    def _e2_input(self, s, a, g, np_mode=False):
        concat = (lambda ts: np.concatenate([t for t in ts if t.shape[-1]], axis=-1)) if np_mode else ad.cat
        if self.sag:
            return concat([s, a, g])
        return concat([s, g])

    def forward(self, s, a, g):
        x = self.e1.forward(ad.cat([s, a]))
        y = self.e2.forward(self._e2_input(s, a, g))
        d = self.head.distance(x, y)
        return ad.reshape(ad.neg(d), (-1, 1))

    def forward_np(self, s, a, g):
        x = self.e1.forward_np(np.concatenate([t for t in (s, a) if t.shape[-1]], axis=-1))
        y = self.e2.forward_np(self._e2_input(s, a, g, np_mode=True))
        return -self.head.distance_np(x, y).reshape(-1, 1)

    def params(self):
        return self.e1.params() + self.e2.params() + self.head.params()

    def param_count(self):
        return sum(p.data.size for p in self.params())

    def state(self):
        out = {"variant": np.array(self.variant)}
        out.update(self.e1.state("e1"))
        out.update(self.e2.state("e2"))
        out.update(self.head.state("head"))
        return out

    def load_state(self, state):
        self.e1.load_state(state, "e1")
        self.e2.load_state(state, "e2")
        self.head.load_state(state, "head")


class BvnCritic:
    """Bilinear critic: Q = f(s,a) . phi(s,g); sign unconstrained."""

    variant = "bvn"

    def __init__(self, f, phi):
        self.f = f
        self.phi = phi

    def forward(self, s, a, g):
        u = self.f.forward(ad.cat([s, a]))
        v = self.phi.forward(ad.cat([s, g]))
        return ad.reshape(ad.sum_last(ad.mul(u, v)), (-1, 1))

    def forward_np(self, s, a, g):
        u = self.f.forward_np(np.concatenate([t for t in (s, a) if t.shape[-1]], axis=-1))
        v = self.phi.forward_np(np.concatenate([t for t in (s, g) if t.shape[-1]], axis=-1))
        return (u * v).sum(axis=-1).reshape(-1, 1)

    def params(self):
        return self.f.params() + self.phi.params()

    def param_count(self):
        return sum(p.data.size for p in self.params())

    def state(self):
        out = {"variant": np.array(self.variant)}
        out.update(self.f.state("f"))
        out.update(self.phi.state("phi"))
        return out

    def load_state(self, state):
        self.f.load_state(state, "f")
        self.phi.load_state(state, "phi")


class MonolithicCritic:
    """Plain MLP on (s, a, g); sign unconstrained."""

    variant = "monolithic"

    def __init__(self, net):
        self.net = net

    def forward(self, s, a, g):
        return self.net.forward(ad.cat([s, a, g]))

    def forward_np(self, s, a, g):
        return self.net.forward_np(
            np.concatenate([t for t in (s, a, g) if t.shape[-1]], axis=-1)
        )

    def params(self):
        return self.net.params()

    def param_count(self):
        return self.net.param_count()

    def state(self):
        out = {"variant": np.array(self.variant)}
        out.update(self.net.state("net"))
        return out

    def load_state(self, state):
        self.net.load_state(state, "net")


class Actor:
    """Deterministic policy (s, g) -> action, tanh-squashed into the box."""

    def __init__(self, net, low, high):
        self.net = net
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.center = (self.low + self.high) / 2.0
        self.half = (self.high - self.low) / 2.0

    def forward(self, s, g):
        z = ad.tanh(self.net.forward(ad.cat([s, g])))
        return ad.row_shift(ad.row_scale(z, self.half), self.center)

    def forward_np(self, s, g):
        z = np.tanh(self.net.forward_np(np.concatenate([s, g], axis=-1)))
        return z * self.half.astype(z.dtype) + self.center.astype(z.dtype)

    def params(self):
        return self.net.params()

    def param_count(self):
        return self.net.param_count()

    def state(self):
        out = {"low": self.low, "high": self.high}
        out.update(self.net.state("net"))
        return out

    def load_state(self, state):
        self.net.load_state(state, "net")


@dataclass
class Sizes:
    """Layer widths for all variants; heads' output widths m (embedding)
    and K (asym channels) default to 16, which is what keeps MRN, BVN and
    the monolithic net within a few percent of each other in parameters."""

    monolithic_width: int = 256
    monolithic_layers: int = 3
    bvn_width: int = 176
    bvn_layers: int = 3
    enc_width: int = 176
    head_width: int = 176
    solo_head_width: int = 300
    embed_dim: int = 16
    asym_dim: int = 16
    sym_reduction: str = "mean"


def make_critic(variant, s_dim, a_dim, g_dim, sizes=None, rng=None, dtype=np.float64):
    sizes = sizes or Sizes()
    rng = rng if rng is not None else np.random.default_rng()
    if variant == "monolithic":
        net = Mlp(
            s_dim + a_dim + g_dim,
            [sizes.monolithic_width] * sizes.monolithic_layers,
            1,
            rng,
            dtype=dtype,
        )
        return MonolithicCritic(net)
    if variant == "bvn":
        f = Mlp(s_dim + a_dim, [sizes.bvn_width] * sizes.bvn_layers, sizes.embed_dim, rng, dtype=dtype)
        phi = Mlp(s_dim + g_dim, [sizes.bvn_width] * sizes.bvn_layers, sizes.embed_dim, rng, dtype=dtype)
        return BvnCritic(f, phi)
    if variant in ("mrn", "mrn-sym-only", "mrn-asym-only", "mrn-sag"):
        sag = variant == "mrn-sag"
        w = sizes.enc_width
        e1 = Mlp(s_dim + a_dim, [w], w, rng, out_activation="relu", dtype=dtype)
        e2_in = s_dim + a_dim + g_dim if sag else s_dim + g_dim
        e2 = Mlp(e2_in, [w], w, rng, out_activation="relu", dtype=dtype)
        if variant == "mrn-sym-only":
            head = MrnHead(
                sym=Mlp(w, [sizes.solo_head_width], sizes.embed_dim, rng, dtype=dtype),
                sym_reduction=sizes.sym_reduction,
            )
        elif variant == "mrn-asym-only":
            head = MrnHead(
                asym=Mlp(w, [sizes.solo_head_width], sizes.asym_dim, rng, dtype=dtype),
            )
        else:
            head = MrnHead(
                sym=Mlp(w, [sizes.head_width], sizes.embed_dim, rng, dtype=dtype),
                asym=Mlp(w, [sizes.head_width], sizes.asym_dim, rng, dtype=dtype),
                sym_reduction=sizes.sym_reduction,
            )
        critic = MrnCritic(e1, e2, head, sag=sag)
        critic.variant = variant
        return critic
    raise ValueError(f"unknown critic variant {variant!r}")


def make_actor(s_dim, g_dim, a_low, a_high, sizes=None, rng=None, dtype=np.float64):
    sizes = sizes or Sizes()
    rng = rng if rng is not None else np.random.default_rng()
    a_dim = len(np.atleast_1d(a_low))
    net = Mlp(
        s_dim + g_dim,
        [sizes.monolithic_width] * sizes.monolithic_layers,
        a_dim,
        rng,
        dtype=dtype,
    )
    return Actor(net, a_low, a_high)


# ---------------------------------------------------------------------------
# optimizer and target-network utilities
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def polyak_update(target_params, online_params, polyak):
    """target <- polyak * target + (1 - polyak) * online."""
    for t, o in zip(target_params, online_params):
        t.data *= polyak
        t.data += (1.0 - polyak) * o.data


def copy_params(dst_params, src_params):
    for d, s in zip(dst_params, src_params):
        d.data = s.data.copy()


# ---------------------------------------------------------------------------
# finite-difference verification of every architecture
# ---------------------------------------------------------------------------

def _tiny_sizes(rng):
    return Sizes(
        monolithic_width=int(rng.integers(3, 7)),
        monolithic_layers=2,
        bvn_width=int(rng.integers(3, 6)),
        bvn_layers=2,
        enc_width=int(rng.integers(3, 6)),
        head_width=int(rng.integers(3, 6)),
        solo_head_width=int(rng.integers(4, 8)),
        embed_dim=int(rng.integers(2, 5)),
        asym_dim=int(rng.integers(2, 5)),
    )


def gradcheck_battery(seed=0, trials=100, step=1e-5, tol=1e-4):
    """Finite-difference checks of every critic variant's Q and of the
    actor loss, across ``trials`` random small parameterizations.

    Returns a list of (label, GradCheckReport); all nets are built in
    64-bit.  Inputs and parameters are both checked.
    """
    from . import autodiff as ad

    rng = np.random.default_rng(seed)
    cases = list(VARIANTS) + ["actor-loss"]
    reports = []
    for trial in range(trials):
        label = cases[trial % len(cases)]
        sizes = _tiny_sizes(rng)
        s_dim, a_dim, g_dim = (int(v) for v in rng.integers(1, 4, size=3))
        batch = int(rng.integers(1, 4))
        s = Tensor(rng.normal(size=(batch, s_dim)))
        a = Tensor(rng.normal(size=(batch, a_dim)))
        g = Tensor(rng.normal(size=(batch, g_dim)))
        if label == "actor-loss":
            critic = make_critic("mrn", s_dim, a_dim, g_dim, sizes=sizes, rng=rng)
            actor = make_actor(
                s_dim, g_dim, -np.ones(a_dim), np.ones(a_dim), sizes=sizes, rng=rng
            )

            def f(_):
                a_pi = actor.forward(s, g)
                return ad.neg(ad.mean_all(critic.forward(s, a_pi, g)))

            xs = actor.params()
        else:
            critic = make_critic(label, s_dim, a_dim, g_dim, sizes=sizes, rng=rng)

            def f(_):
                return ad.sum_all(critic.forward(s, a, g))

            xs = critic.params() + [s, a, g]
        reports.append((f"{label}[{trial}]", ad.grad_check(f, xs, step=step, tol=tol)))
    return reports


# ---------------------------------------------------------------------------
# parameter checkpoint format: a flat name -> array mapping in an npz file
# with a version marker under the key "_format"
# ---------------------------------------------------------------------------

def save_params(path, state):
    arrays = {"_format": np.array(PARAMS_FORMAT)}
    for k, v in state.items():
        arrays[k] = np.asarray(v)
    np.savez(path, **arrays)


def load_params(path):
    with np.load(path, allow_pickle=False) as data:
        if "_format" not in data or str(data["_format"]) != PARAMS_FORMAT:
            raise ValueError(f"{path}: not a {PARAMS_FORMAT} checkpoint")
        return {k: data[k] for k in data.files if k != "_format"}
