"""Desk-scale goal-conditioned RL: point-mass environment, DDPG + HER.

The agent lives in the unit square, moves by bounded displacements, and
earns reward 0 whenever its post-action position lies within the goal
tolerance, -1 otherwise.  Episodes truncate at the horizon but never
terminate on success; evaluation scores the final step.  Training
alternates episode collection, HER-relabelled critic/actor updates and a
deterministic evaluation pass per epoch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import nets
from .autodiff import Tensor


@dataclass
class PointMassEnv:
    a_max: float = 0.05
    eps_goal: float = 0.03
    horizon: int = 50
    wall: bool = False  # optional obstacle: vertical wall with a gap at the top

    wall_x: float = 0.5
    wall_top: float = 0.7

    state_dim = 2
    goal_dim = 2
    action_dim = 2

    @property
    def a_low(self):
        return np.full(2, -self.a_max)

    @property
    def a_high(self):
        return np.full(2, self.a_max)

    def sample_states(self, rng, n):
        return rng.uniform(0.0, 1.0, size=(n, 2))

    def sample_goals(self, rng, n):
        return rng.uniform(0.0, 1.0, size=(n, 2))

    def step_batch(self, s, a):
        """Deterministic dynamics on a batch: clip the action to the box,
        the position to the square; returns (s2, achieved_goal)."""
        a = np.clip(a, -self.a_max, self.a_max)
        s2 = np.clip(s + a, 0.0, 1.0)
        if self.wall:
            crosses = (s[:, 0] - self.wall_x) * (s2[:, 0] - self.wall_x) < 0
            blocked = crosses & (np.minimum(s[:, 1], s2[:, 1]) <= self.wall_top)
            s2 = s2.copy() if s2.base is not None else s2
            s2[blocked, 0] = s[blocked, 0]
        return s2, s2.copy()

    def reward(self, achieved, g):
        dist = np.linalg.norm(achieved - g, axis=-1)
        return np.where(dist <= self.eps_goal, 0.0, -1.0)


@dataclass
class Episode:
    s: np.ndarray  # (H, 2)
    a: np.ndarray  # (H, 2)
    r: np.ndarray  # (H,)
    s2: np.ndarray  # (H, 2)
    ag: np.ndarray  # (H, 2) achieved goal at each step
    g: np.ndarray  # (2,)


class ReplayBuffer:
    """Ring buffer of whole episodes with FIFO eviction."""

    def __init__(self, capacity, horizon, s_dim=2, a_dim=2, g_dim=2):
        self.capacity = capacity
        self.horizon = horizon
        self.s = np.empty((capacity, horizon, s_dim), dtype=np.float64)
        self.a = np.empty((capacity, horizon, a_dim), dtype=np.float64)
        self.r = np.empty((capacity, horizon), dtype=np.float64)
        self.s2 = np.empty((capacity, horizon, s_dim), dtype=np.float64)
        self.ag = np.empty((capacity, horizon, g_dim), dtype=np.float64)
        self.g = np.empty((capacity, g_dim), dtype=np.float64)
        self.n_stored = 0
        self._next = 0

    def __len__(self):
        return self.n_stored

    def add_episode(self, ep):
        self.add_batch(ep.s[None], ep.a[None], ep.r[None], ep.s2[None], ep.ag[None], ep.g[None])

    def add_batch(self, s, a, r, s2, ag, g):
        n = s.shape[0]
        for arr, chunk in ((self.s, s), (self.a, a), (self.r, r), (self.s2, s2), (self.ag, ag)):
            self._ring_write(arr, chunk)
        self._ring_write(self.g, g)
        self._next = (self._next + n) % self.capacity
        self.n_stored = min(self.n_stored + n, self.capacity)

    def _ring_write(self, arr, chunk):
        n = chunk.shape[0]
        idx = (self._next + np.arange(n)) % self.capacity
        arr[idx] = chunk

    def sample_indices(self, rng, n):
        if self.n_stored == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        ep = rng.integers(0, self.n_stored, size=n)
        t = rng.integers(0, self.horizon, size=n)
        return ep, t


def her_relabel(buffer, ep_idx, t_idx, future_p, rng, env):
    """Assemble a training batch, relabelling a ``future_p`` fraction of
    samples with the achieved goal of a uniformly drawn transition at or
    after the sampled step of the same episode; rewards for relabelled
    samples are recomputed from the stored achieved goals."""
    if not 0.0 <= future_p <= 1.0:
        raise ValueError(f"future_p must be in [0, 1], got {future_p}")
    s = buffer.s[ep_idx, t_idx]
    a = buffer.a[ep_idx, t_idx]
    r = buffer.r[ep_idx, t_idx].copy()
    s2 = buffer.s2[ep_idx, t_idx]
    g = buffer.g[ep_idx].copy()
    relabel = rng.random(len(ep_idx)) < future_p
    if relabel.any():
        t_sel = t_idx[relabel]
        future_t = t_sel + rng.integers(0, buffer.horizon - t_sel)
        new_g = buffer.ag[ep_idx[relabel], future_t]
        g[relabel] = new_g
        r[relabel] = env.reward(buffer.ag[ep_idx[relabel], t_idx[relabel]], new_g)
    return {"s": s, "a": a, "r": r, "s2": s2, "g": g}


def compute_target(r, q_next, gamma):
    """TD target r + gamma * q_next clipped into the feasible return range
    [-1/(1-gamma), 0]."""
    y = r + gamma * q_next
    return np.clip(y, -1.0 / (1.0 - gamma), 0.0)


class DdpgAgent:
    def __init__(
        self,
        env,
        arch="mrn",
        rng=None,
        lr=1e-3,
        gamma=0.98,
        polyak=0.95,
        noise_sigma=0.2,
        random_eps=0.2,
        action_l2=0.1,
        sizes=None,
        dtype=np.float32,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self.env = env
        self.arch = arch
        self.gamma = gamma
        self.polyak = polyak
        self.noise_sigma = noise_sigma
        self.random_eps = random_eps
        self.action_l2 = action_l2
        self.dtype = dtype
        sizes = sizes or nets.Sizes()
        dims = (env.state_dim, env.action_dim, env.goal_dim)
        self.critic = nets.make_critic(arch, *dims, sizes=sizes, rng=rng, dtype=dtype)
        self.actor = nets.make_actor(
            env.state_dim, env.goal_dim, env.a_low, env.a_high, sizes=sizes, rng=rng, dtype=dtype
        )
        self.critic_target = nets.make_critic(arch, *dims, sizes=sizes, rng=rng, dtype=dtype)
        self.actor_target = nets.make_actor(
            env.state_dim, env.goal_dim, env.a_low, env.a_high, sizes=sizes, rng=rng, dtype=dtype
        )
        nets.copy_params(self.critic_target.params(), self.critic.params())
        nets.copy_params(self.actor_target.params(), self.actor.params())
        for p in self.critic_target.params() + self.actor_target.params():
            p.requires_grad = False
        self.opt_critic = nets.Adam(self.critic.params(), lr=lr)
        self.opt_actor = nets.Adam(self.actor.params(), lr=lr)
        self.q_max_seen = -np.inf

    def act_np(self, s, g, explore=False, rng=None):
        a = self.actor.forward_np(s.astype(self.dtype), g.astype(self.dtype)).astype(np.float64)
        if explore:
            a = a + rng.normal(0.0, self.noise_sigma * self.env.a_max, size=a.shape)
            random_mask = rng.random(len(a)) < self.random_eps
            if random_mask.any():
                a[random_mask] = rng.uniform(
                    -self.env.a_max, self.env.a_max, size=(int(random_mask.sum()), a.shape[1])
                )
        return np.clip(a, -self.env.a_max, self.env.a_max)

    def critic_input_np(self, a):
        # actions are fed to the critic rescaled to [-1, 1]; at their raw
        # 0.05 scale the critic is nearly action-blind next to unit-scale
        # positions
        return (a / self.env.a_max).astype(self.dtype)

    def update(self, batch):
        """One critic + actor gradient step on a HER batch, then polyak
        target tracking.  Returns (critic_loss, actor_loss)."""
        dt = self.dtype
        s = batch["s"].astype(dt)
        a = self.critic_input_np(batch["a"])
        g = batch["g"].astype(dt)
        s2 = batch["s2"].astype(dt)

        a2 = self.critic_input_np(self.actor_target.forward_np(s2, g))
        q2 = self.critic_target.forward_np(s2, a2, g)[:, 0].astype(np.float64)
        y = compute_target(batch["r"], q2, self.gamma)

        st, at, gt = Tensor(s), Tensor(a), Tensor(g)
        q = self.critic.forward(st, at, gt)
        self.q_max_seen = max(self.q_max_seen, float(q.data.max()))
        yt = Tensor(y.astype(dt).reshape(-1, 1))
        critic_loss = ad.mean_all(ad.square(ad.sub(q, yt)))
        self.opt_critic.zero_grad()
        critic_loss.backward()
        self.opt_critic.step()

        a_pi = self.actor.forward(st, gt)
        a_unit = ad.row_scale(a_pi, 1.0 / self.actor.half)
        q_pi = self.critic.forward(st, a_unit, gt)
        actor_loss = ad.neg(ad.mean_all(q_pi))
        if self.action_l2:
            # keeps the tanh unsaturated, as in the usual HER recipe
            actor_loss = ad.add(
                actor_loss, ad.scale(ad.mean_all(ad.square(a_unit)), self.action_l2)
            )
        self.opt_actor.zero_grad()
        self.opt_critic.zero_grad()  # actor backprop flows through the critic
        actor_loss.backward()
        self.opt_actor.step()

        nets.polyak_update(self.critic_target.params(), self.critic.params(), self.polyak)
        nets.polyak_update(self.actor_target.params(), self.actor.params(), self.polyak)

        c, al = float(critic_loss.data), float(actor_loss.data)
        if not (np.isfinite(c) and np.isfinite(al)):
            raise RuntimeError(f"non-finite loss: critic {c}, actor {al}")
        return c, al

    def state(self):
        out = {}
        for k, v in self.critic.state().items():
            out[f"critic.{k}"] = v
        for k, v in self.actor.state().items():
            out[f"actor.{k}"] = v
        return out

    def load_state(self, state):
        critic_state = {k[len("critic.") :]: v for k, v in state.items() if k.startswith("critic.")}
        actor_state = {k[len("actor.") :]: v for k, v in state.items() if k.startswith("actor.")}
        self.critic.load_state(critic_state)
        self.actor.load_state(actor_state)
        nets.copy_params(self.critic_target.params(), self.critic.params())
        nets.copy_params(self.actor_target.params(), self.actor.params())


def collect_episodes(env, agent, n, explore, rng):
    """Roll out n episodes in lockstep (the envs are independent)."""
    h = env.horizon
    s = env.sample_states(rng, n)
    g = env.sample_goals(rng, n)
    ss = np.empty((n, h, 2))
    aa = np.empty((n, h, 2))
    rr = np.empty((n, h))
    ss2 = np.empty((n, h, 2))
    agg = np.empty((n, h, 2))
    for t in range(h):
        a = agent.act_np(s, g, explore=explore, rng=rng)
        s2, achieved = env.step_batch(s, a)
        ss[:, t] = s
        aa[:, t] = a
        rr[:, t] = env.reward(achieved, g)
        ss2[:, t] = s2
        agg[:, t] = achieved
        s = s2
    return ss, aa, rr, ss2, agg, g


def rollout(env, agent, explore, rng):
    """One episode; deterministic given the rng state."""
    ss, aa, rr, ss2, agg, g = collect_episodes(env, agent, 1, explore, rng)
    return Episode(s=ss[0], a=aa[0], r=rr[0], s2=ss2[0], ag=agg[0], g=g[0])


def evaluate(env, agent, n_rollouts, rng):
    """Fraction of exploration-free rollouts whose final step achieves the
    goal within tolerance."""
    ss, aa, rr, ss2, agg, g = collect_episodes(env, agent, n_rollouts, explore=False, rng=rng)
    final_ok = np.linalg.norm(agg[:, -1] - g, axis=-1) <= env.eps_goal
    return float(final_ok.mean())


@dataclass
class TrainConfig:
    arch: str = "mrn"
    seed: int = 100
    epochs: int = 50
    episodes_per_epoch: int = 100
    cycles_per_epoch: int = 10  # epoch = cycles x (collect + 40 updates)
    updates_per_cycle: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    gamma: float = 0.98
    polyak: float = 0.998
    noise_sigma: float = 0.2
    random_eps: float = 0.2
    action_l2: float = 0.1
    future_p: float = 0.8
    buffer_episodes: int = 10_000
    eval_rollouts: int = 100
    wall: bool = False
    early_stop_success: float = -1.0  # stop once reached; <0 disables
    sym_reduction: str = "mean"


@dataclass
class TrainResult:
    rows: list  # dicts: arch, seed, epoch, success_rate, critic_loss, actor_loss
    agent: DdpgAgent = field(repr=False, default=None)
    q_max_seen: float = -np.inf

    def epochs_to(self, threshold):
        for row in self.rows:
            if row["success_rate"] >= threshold:
                return row["epoch"] + 1
        return None

    @property
    def final_success(self):
        return self.rows[-1]["success_rate"]


def train(config):
    """Full training run: collect, update, evaluate per epoch.  Fully
    deterministic given the seed."""
    env = PointMassEnv(wall=config.wall)
    seq = np.random.SeedSequence(config.seed)
    init_rng, collect_rng, sample_rng, eval_rng = (
        np.random.default_rng(s) for s in seq.spawn(4)
    )
    sizes = nets.Sizes(sym_reduction=config.sym_reduction)
    agent = DdpgAgent(
        env,
        arch=config.arch,
        rng=init_rng,
        lr=config.lr,
        gamma=config.gamma,
        polyak=config.polyak,
        noise_sigma=config.noise_sigma,
        random_eps=config.random_eps,
        action_l2=config.action_l2,
        sizes=sizes,
    )
    buffer = ReplayBuffer(config.buffer_episodes, env.horizon)
    episodes_per_cycle = max(1, config.episodes_per_epoch // config.cycles_per_epoch)
    rows = []
    for epoch in range(config.epochs):
        c_losses = []
        a_losses = []
        for _ in range(config.cycles_per_epoch):
            buffer.add_batch(
                *collect_episodes(env, agent, episodes_per_cycle, True, collect_rng)
            )
            for _ in range(config.updates_per_cycle):
                ep_idx, t_idx = buffer.sample_indices(sample_rng, config.batch_size)
                batch = her_relabel(buffer, ep_idx, t_idx, config.future_p, sample_rng, env)
                c, a = agent.update(batch)
                c_losses.append(c)
                a_losses.append(a)
        success = evaluate(env, agent, config.eval_rollouts, eval_rng)
        rows.append(
            {
                "arch": config.arch,
                "seed": config.seed,
                "epoch": epoch,
                "success_rate": success,
                "critic_loss": float(np.mean(c_losses)),
                "actor_loss": float(np.mean(a_losses)),
            }
        )
        if 0 <= config.early_stop_success <= success:
            break
    return TrainResult(rows=rows, agent=agent, q_max_seen=agent.q_max_seen)


def write_curve_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arch", "seed", "epoch", "success_rate", "critic_loss", "actor_loss"])
        for r in rows:
            w.writerow(
                [
                    r["arch"],
                    r["seed"],
                    r["epoch"],
                    repr(float(r["success_rate"])),
                    repr(float(r["critic_loss"])),
                    repr(float(r["actor_loss"])),
                ]
            )


def oracle_policy_actions(env, s, g):
    """Greedy point-mass policy: step straight at the goal."""
    return np.clip(g - s, -env.a_max, env.a_max)
