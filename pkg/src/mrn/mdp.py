"""Exact optimal values on tiny deterministic goal-conditioned MDPs.

Value iteration gives machine-precision Q* tables, against which two
structural facts are verified exhaustively: the triangle inequality of
Q* over state-action pairs, and the identity tying goal-space values to
the max over the goal's preimage when dynamics are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

MDP_FORMAT = "mrn-mdp-v1"


class ConvergenceError(RuntimeError):
    pass


@dataclass
class DiscreteGcMdp:
    """Deterministic goal-conditioned MDP with tabular everything.

    The goal map sends each state-action pair to the goal it achieves;
    reward is 0 when the commanded goal is achieved and -1 otherwise, and
    episodes never terminate.  State-action pairs are flattened to
    x = s * n_actions + a where a pair index is needed.
    """

    next_state: np.ndarray  # (nS, nA) int
    goal_map: np.ndarray  # (nS, nA) int, onto range(n_goals)
    n_goals: int
    gamma: float

    def __post_init__(self):
        self.next_state = np.asarray(self.next_state, dtype=np.int64)
        self.goal_map = np.asarray(self.goal_map, dtype=np.int64)
        if self.next_state.ndim != 2 or self.next_state.shape != self.goal_map.shape:
            raise ValueError("next_state and goal_map must be equal-shape (nS, nA) tables")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        n_s = self.next_state.shape[0]
        if self.next_state.min() < 0 or self.next_state.max() >= n_s:
            raise ValueError("next_state entries out of range")
        if self.goal_map.min() < 0 or self.goal_map.max() >= self.n_goals:
            raise ValueError("goal_map entries out of range")
        present = np.unique(self.goal_map)
        if present.size != self.n_goals:
            raise ValueError("goal_map is not onto the goal set")

    @property
    def n_states(self):
        return self.next_state.shape[0]

    @property
    def n_actions(self):
        return self.next_state.shape[1]

    @property
    def n_x(self):
        return self.n_states * self.n_actions

    def pair_index(self, s, a):
        return s * self.n_actions + a

    def rewards_for_goal(self, goal):
        return np.where(self.goal_map == goal, 0.0, -1.0)

    def rewards_for_pair_goal(self, x):
        r = np.full((self.n_states, self.n_actions), -1.0)
        s, a = divmod(int(x), self.n_actions)
        r[s, a] = 0.0
        return r


@dataclass
class ValueIterationResult:
    values: np.ndarray  # (nS, nA)
    sweeps: int
    residual: float
    tol: float
    residuals: np.ndarray = field(repr=False, default=None)


def sweep_cap(gamma, tol):
    stop = tol * (1.0 - gamma)
    return int(math.ceil(math.log(stop) / math.log(gamma))) + 16


def value_iteration(mdp, goal, tol=1e-10, pair_goal=False):
    """Solve q(s,a) = r + gamma * max_a' q(next(s,a), a') to sup-norm
    accuracy ``tol``; ``pair_goal`` switches the reward to demand the exact
    state-action pair ``goal`` instead of a goal-map match."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    rewards = mdp.rewards_for_pair_goal(goal) if pair_goal else mdp.rewards_for_goal(goal)
    stop = tol * (1.0 - mdp.gamma)
    cap = sweep_cap(mdp.gamma, tol)
    q, sweeps, residuals = kernels.value_iteration_table(
        mdp.next_state, rewards, mdp.gamma, stop, cap
    )
    if sweeps < 0:
        raise ConvergenceError(
            f"value iteration did not reach residual {stop:g} within {cap} sweeps"
        )
    return ValueIterationResult(
        values=q, sweeps=sweeps, residual=float(residuals[-1]), tol=tol, residuals=residuals
    )


def q_star_pairwise(mdp, tol=1e-10):
    """Q*(x1, x2) for every pair of state-action indices (goal = exact pair)."""
    n = mdp.n_x
    out = np.empty((n, n))
    for x2 in range(n):
        out[:, x2] = value_iteration(mdp, x2, tol=tol, pair_goal=True).values.ravel()
    return out


def q_star_goals(mdp, tol=1e-10):
    """Q*(x, g) for every state-action index and goal (goal-map reward)."""
    out = np.empty((mdp.n_x, mdp.n_goals))
    for g in range(mdp.n_goals):
        out[:, g] = value_iteration(mdp, g, tol=tol).values.ravel()
    return out


@dataclass
class TriangleReport:
    n_triples: int
    n_violations: int
    worst_margin: float
    witness: tuple
    slack: float

    @property
    def passed(self):
        return self.n_violations == 0

    def __str__(self):
        status = "ok" if self.passed else "VIOLATED"
        return (
            f"triangle over {self.n_triples} triples: {status}, "
            f"{self.n_violations} violations, worst margin {self.worst_margin:.3e} "
            f"at {self.witness} (slack {self.slack:g})"
        )


def verify_triangle(mdp, tol=1e-10, q_pairs=None):
    """Exhaustively check Q*(x1,x2) + Q*(x2,x3) <= Q*(x1,x3) + slack over
    all state-action triples, slack = 10 * tol."""
    if q_pairs is None:
        q_pairs = q_star_pairwise(mdp, tol=tol)
    slack = 10.0 * tol
    count, worst, witness = kernels.triangle_scan(-q_pairs, slack)
    n = q_pairs.shape[0]
    return TriangleReport(
        n_triples=n**3, n_violations=count, worst_margin=worst, witness=witness, slack=slack
    )


@dataclass
class SupIdentityReport:
    max_discrepancy: float
    witness: tuple
    slack: float
    max_dominance_violation: float = 0.0

    @property
    def passed(self):
        return self.max_discrepancy <= self.slack

    @property
    def dominance_holds(self):
        # Q*(x, g) >= max over the preimage: the direction that provably
        # holds (an achieving pair achieves its goal at every visit)
        return self.max_dominance_violation <= self.slack

    def __str__(self):
        status = "ok" if self.passed else "VIOLATED"
        return (
            f"sup identity: {status}, max |Q*(x,g) - max over preimage| = "
            f"{self.max_discrepancy:.3e} at {self.witness} (slack {self.slack:g}, "
            f"dominance violation {self.max_dominance_violation:.3e})"
        )


def verify_sup_identity(mdp, tol=1e-10):
    """Check Q*(x, g) == max over x' with goal_map(x') == g of Q*(x, x')
    for every pair (x, g), to slack 10 * tol.

    The equality fails on instances whose optimal goal-reaching cycles
    collect reward at several preimage pairs (see the one-way dominance
    field for the direction that always holds).
    """
    q_goals = q_star_goals(mdp, tol=tol)
    q_pairs = q_star_pairwise(mdp, tol=tol)
    flat_map = mdp.goal_map.ravel()
    worst = -1.0
    witness = (-1, -1)
    dominance = 0.0
    for g in range(mdp.n_goals):
        preimage = np.flatnonzero(flat_map == g)
        best = q_pairs[:, preimage].max(axis=1)
        disc = np.abs(q_goals[:, g] - best)
        dominance = max(dominance, float((best - q_goals[:, g]).max()))
        x = int(np.argmax(disc))
        if disc[x] > worst:
            worst = float(disc[x])
            witness = (x, g)
    return SupIdentityReport(
        max_discrepancy=worst,
        witness=witness,
        slack=10.0 * tol,
        max_dominance_violation=dominance,
    )


def make_corpus(seed, n, gammas=(0.9, 0.98), identity_goals=True, max_states=6, max_actions=3):
    """Reproducible corpus of random deterministic MDP instances; gammas
    cycle across instances."""
    children = np.random.SeedSequence(seed).spawn(n)
    mdps = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        gamma = gammas[i % len(gammas)]
        mdps.append(
            random_mdp(rng, max_states, max_actions, gamma=gamma, identity_goals=identity_goals)
        )
    return mdps


# ---------------------------------------------------------------------------
# random instance generation and the text fixture format
# ---------------------------------------------------------------------------

def random_mdp(rng, max_states=6, max_actions=3, gamma=0.9, identity_goals=False, n_goals=None):
    """Uniform random deterministic MDP; goal maps are resampled until onto.

    ``identity_goals`` makes the goal space the state-action pairs
    themselves; otherwise a strictly smaller onto (hence non-injective)
    goal set is drawn.
    """
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(1, max_actions + 1))
    next_state = rng.integers(0, n_s, size=(n_s, n_a))
    if identity_goals:
        goal_map = np.arange(n_s * n_a).reshape(n_s, n_a)
        return DiscreteGcMdp(next_state, goal_map, n_s * n_a, gamma)
    n_x = n_s * n_a
    if n_goals is None:
        n_goals = int(rng.integers(1, max(2, n_x)))
    if n_goals > n_x:
        raise ValueError("cannot be onto with more goals than state-action pairs")
    while True:
        goal_map = rng.integers(0, n_goals, size=(n_s, n_a))
        if np.unique(goal_map).size == n_goals:
            return DiscreteGcMdp(next_state, goal_map, n_goals, gamma)


def save_mdp(path, mdp):
    lines = [
        MDP_FORMAT,
        f"states {mdp.n_states}",
        f"actions {mdp.n_actions}",
        f"goals {mdp.n_goals}",
        f"gamma {mdp.gamma!r}",
        "next",
    ]
    lines += [" ".join(map(str, row)) for row in mdp.next_state]
    lines.append("goal_map")
    lines += [" ".join(map(str, row)) for row in mdp.goal_map]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mdp(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != MDP_FORMAT:
        raise ValueError(f"{path}: not a {MDP_FORMAT} file")
    header = dict(ln.split(None, 1) for ln in lines[1:5])
    n_s = int(header["states"])
    n_a = int(header["actions"])
    n_g = int(header["goals"])
    gamma = float(header["gamma"])
    if lines[5] != "next":
        raise ValueError("malformed mdp file: expected 'next' section")
    next_rows = lines[6 : 6 + n_s]
    if lines[6 + n_s] != "goal_map":
        raise ValueError("malformed mdp file: expected 'goal_map' section")
    goal_rows = lines[7 + n_s : 7 + 2 * n_s]
    next_state = np.array([[int(v) for v in row.split()] for row in next_rows])
    goal_map = np.array([[int(v) for v in row.split()] for row in goal_rows])
    if next_state.shape != (n_s, n_a) or goal_map.shape != (n_s, n_a):
        raise ValueError("malformed mdp file: table shape mismatch")
    return DiscreteGcMdp(next_state, goal_map, n_g, gamma)
