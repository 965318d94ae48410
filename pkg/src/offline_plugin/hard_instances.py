"""Lower-bound instances, their analytic quantities, and bounded-total-reward families."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .data import count_statistics, sample_generative
from .mdp import MDPError, RewardModel, TabularMDP

KINDS = ("ope_two_state", "opo_four_state", "random_uniform_reward", "random_terminal_reward")

# state indices of the two-state chain
CHAIN_ABSORB, CHAIN_LIVE = 0, 1
# state indices of the four-state planning instance
OPO_START, OPO_ABSORB, OPO_LIVE, OPO_SAFE = 0, 1, 2, 3
# the "risky" arm at the start state leads into the chain
ARM_CHAIN = 0


def _check_prob(name: str, p: float, lo_open=False, hi_open=False) -> None:
    if not (0.0 <= p <= 1.0) or (lo_open and p == 0.0) or (hi_open and p == 1.0):
        raise MDPError(name, f"invalid probability {p!r}")


def ope_hard_instance(H: int, p: float) -> TabularMDP:
    """Two states, one action: state 0 absorbing with reward 0; state 1 stays w.p. ``p``, reward 1/H.

    Episodes start in state 1.
    """
    if H < 1:
        raise MDPError("horizon", f"H must be >= 1, got {H}")
    _check_prob("p", p)
    P = np.zeros((2, 1, 2))
    P[CHAIN_ABSORB, 0, CHAIN_ABSORB] = 1.0
    P[CHAIN_LIVE, 0, CHAIN_LIVE] = p
    P[CHAIN_LIVE, 0, CHAIN_ABSORB] = 1.0 - p
    r = np.array([[0.0], [1.0 / H]])
    mu = np.array([0.0, 1.0])
    return TabularMDP(P=P, r=r, mu=mu, H=H, reward_model=RewardModel("deterministic"),
                      bounded_total_reward=True, name=f"ope-two-state-H{H}-p{p:.6g}")


def analytic_chain_value(p: float, H: int) -> float:
    """(p + p^2 + ... + p^H) / H, i.e. (p - p^{H+1}) / ((1 - p) H) with the p -> 1 limit 1."""
    _check_prob("p", p)
    if p == 1.0:
        return 1.0
    return math.fsum(p**h for h in range(1, H + 1)) / H


def analytic_chain_value_closed(p: float, H: int) -> float:
    """Closed form of :func:`analytic_chain_value`; loses precision as p -> 1."""
    _check_prob("p", p)
    if p == 1.0:
        return 1.0
    return (p - p ** (H + 1)) / ((1.0 - p) * H)


def chain_dp_value(p: float, H: int) -> float:
    """Value of the two-state chain when reward is collected from step 1: (1 + p + ... + p^{H-1}) / H."""
    return math.fsum(p**h for h in range(H)) / H


def two_point_c2(c1: float, H: int, n: int) -> float:
    """c2 = c1 - sqrt(c1 (H - c1) / (2 n)); positive only when n > (H - c1) / (2 c1)."""
    c2 = c1 - math.sqrt(c1 * (H - c1) / (2.0 * n))
    if c2 <= 0:
        raise MDPError("c2", f"n={n} too small for H={H}, c1={c1}: c2={c2:.4g} <= 0")
    return c2


def hard_pair(H: int, n: int, c1: float = 1.0) -> tuple[float, float]:
    """(p1, p2) = (1 - c1/H, 1 - c2/H) with the two-point choice of c2."""
    if not 0 < c1 < H:
        raise MDPError("c1", f"need 0 < c1 < H, got c1={c1}, H={H}")
    return 1.0 - c1 / H, 1.0 - two_point_c2(c1, H, n) / H


def opo_branch_values(H: int, p: float, safe_value: float) -> tuple[float, float]:
    """Values from the start state of (chain arm, safe arm); both arms enter at step 2."""
    chain = math.fsum(p**j for j in range(H - 1)) / H
    return chain, safe_value


def opo_hard_instance(H: int, p: float, c0: float, n_dm: float, c1: float = 1.0) -> TabularMDP:
    """Four-state planning instance built on the two-state chain.

    From the start state, action 0 enters the chain and every other action enters an
    absorbing "safe" state. The safe state's per-step reward is set so the safe arm is
    worth ``W(p1) + c0 sqrt(H / n_dm)``, where ``W(p)`` is the chain arm's value and
    ``p1 = 1 - c1/H``.
    """
    if H < 2:
        raise MDPError("horizon", f"H must be >= 2, got {H}")
    _check_prob("p", p)
    p1 = 1.0 - c1 / H
    chain_p1, _ = opo_branch_values(H, p1, 0.0)
    safe = chain_p1 + c0 * math.sqrt(H / n_dm)
    if safe > 1.0:
        raise MDPError("bounded_total_reward", f"safe-arm value {safe:.4g} exceeds 1")
    A = 2
    P = np.zeros((4, A, 4))
    P[OPO_START, ARM_CHAIN, OPO_LIVE] = 1.0
    P[OPO_START, 1:, OPO_SAFE] = 1.0
    P[OPO_ABSORB, :, OPO_ABSORB] = 1.0
    P[OPO_LIVE, :, OPO_LIVE] = p
    P[OPO_LIVE, :, OPO_ABSORB] = 1.0 - p
    P[OPO_SAFE, :, OPO_SAFE] = 1.0
    r = np.zeros((4, A))
    r[OPO_LIVE, :] = 1.0 / H
    r[OPO_SAFE, :] = safe / (H - 1)
    mu = np.zeros(4)
    mu[OPO_START] = 1.0
    return TabularMDP(P=P, r=r, mu=mu, H=H, reward_model=RewardModel("deterministic"),
                      bounded_total_reward=True, name=f"opo-four-state-H{H}-p{p:.6g}")


def lower_bound_c0(c1: float, H: int) -> float:
    """A constant c0 with W(p2) - W(p1) >= 2 c0 sqrt(H / n) for every n admitting the two-point pair.

    Uses convexity of the chain-arm value W on [p1, p2] and its slope at p1:
    W(p2) - W(p1) >= W'(p1) (c1 - c2) / H and (c1 - c2) = sqrt(c1 (H - c1) / (2n)).
    """
    p1 = 1.0 - c1 / H
    slope = math.fsum(j * p1 ** (j - 1) for j in range(1, H - 1)) / H
    return slope * math.sqrt(c1 * (H - c1) / 2.0) / (2.0 * H * math.sqrt(H))


def kl_bernoulli(p: float, q: float) -> float:
    """KL(Bern(p) || Bern(q)) with 0 log 0 = 0; ``inf`` when q is 0 or 1 and p differs."""
    _check_prob("p", p)
    _check_prob("q", q)
    return float(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))


def kl_bernoulli_upper(p: float, q: float) -> float:
    """(p - q)^2 / (q (1 - q))."""
    _check_prob("p", p)
    _check_prob("q", q)
    if q in (0.0, 1.0):
        return 0.0 if p == q else math.inf
    return (p - q) ** 2 / (q * (1.0 - q))


def le_cam_error_floor(n: int, p1: float, p2: float) -> float:
    """Lower bound on P1(test != p1) + P2(test != p2) from n Bernoulli samples.

    1 - TV >= 1 - sqrt(n KL / 2) (Pinsker) with KL(Bern(p2) || Bern(p1)) bounded by
    (p1 - p2)^2 / (p1 (1 - p1)); clamped to [0, 1].
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    floor = 1.0 - math.sqrt(n * kl_bernoulli_upper(p2, p1) / 2.0)
    return min(1.0, max(0.0, floor))


def sample_chain_counts(p: float, H: int, n_live: int, seed: int):
    """Generative counts for the two-state chain with exactly ``n_live`` draws at the live state."""
    mdp = ope_hard_instance(H, p)
    data = sample_generative(mdp, [(CHAIN_ABSORB, 0), (CHAIN_LIVE, 0)], 2 * n_live, seed)
    return mdp, count_statistics(data)


def bounded_reward_random_instance(S: int, A: int, H: int, seed: int, style: str = "uniform",
                                   concentration: float = 1.0) -> TabularMDP:
    """Random instance satisfying the bounded-total-reward condition by construction.

    ``uniform``: every mean reward at most 1/H (max exactly 1/H), observed rewards on {0, 1/H}.
    ``terminal``: only the goal state ``S - 2`` pays (Bernoulli, mean <= 1); it always moves to the
    absorbing zero-reward sink ``S - 1``, which cannot return, so the goal pays at most once.
    """
    if S < 1 or A < 1 or H < 1:
        raise MDPError("shape", f"invalid shape S={S}, A={A}, H={H}")
    rng = np.random.default_rng(seed)
    if style == "uniform":
        P = rng.dirichlet(np.full(S, concentration), size=(S, A))
        mu = rng.dirichlet(np.ones(S))
        u = rng.uniform(0.0, 1.0, size=(S, A))
        r = (u / u.max()) / H
        model = RewardModel("bernoulli", 1.0 / H)
    elif style == "terminal":
        if S < 3:
            raise MDPError("shape", "terminal style needs S >= 3 (transient, goal, sink)")
        goal, sink = S - 2, S - 1
        P = np.zeros((S, A, S))
        P[:goal] = rng.dirichlet(np.full(S, concentration), size=(goal, A))
        P[goal, :, sink] = 1.0
        P[sink, :, sink] = 1.0
        mu = np.zeros(S)
        mu[:goal] = rng.dirichlet(np.ones(goal))
        r = np.zeros((S, A))
        r[goal] = rng.uniform(0.0, 1.0, size=A)
        model = RewardModel("bernoulli", 1.0)
    else:
        raise MDPError("style", f"unknown style {style!r}")
    return TabularMDP(P=P, r=r, mu=mu, H=H, reward_model=model, bounded_total_reward=True,
                      name=f"random-{style}-S{S}-A{A}-H{H}-seed{seed}")


def reference_instance(H: int = 4) -> TabularMDP:
    """The seed-7, S=3, A=2 uniform-reward instance used across tests and experiments."""
    return bounded_reward_random_instance(3, 2, H, seed=7, style="uniform")


@dataclass(frozen=True)
class HardInstanceSpec:
    kind: str
    H: int
    S: int = 3
    A: int = 2
    p: float | None = None
    p1: float | None = None
    p2: float | None = None
    c0: float | None = None
    c1: float = 1.0
    n_dm: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MDPError("kind", f"unknown instance kind {self.kind!r}; choose from {KINDS}")
        for name in ("p", "p1", "p2"):
            val = getattr(self, name)
            if val is not None:
                _check_prob(name, val, lo_open=True, hi_open=True)

    def build(self) -> TabularMDP:
        if self.kind == "ope_two_state":
            return ope_hard_instance(self.H, self._p())
        if self.kind == "opo_four_state":
            return opo_hard_instance(self.H, self._p(), self.c0, self.n_dm, self.c1)
        style = "uniform" if self.kind == "random_uniform_reward" else "terminal"
        return bounded_reward_random_instance(self.S, self.A, self.H, self.seed, style)

    def _p(self) -> float:
        if self.p is not None:
            return self.p
        if self.p1 is not None:
            return self.p1
        raise MDPError("p", f"{self.kind} needs p or p1")
