"""Episodic time-homogeneous tabular MDPs and exact dynamic-programming solvers.

Arrays follow one convention throughout the package:

* ``P[s, a, s']`` transition probabilities,
* ``r[s, a]`` mean rewards,
* ``pi[h, s, a]`` non-stationary policies, ``h = 0 .. H-1``,
* ``V[h, s]`` with an extra boundary row ``V[H] = 0``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12

MDP_SCHEMA = "tabular-mdp/1"
POLICY_SCHEMA = "tabular-policy/1"


class MDPError(ValueError):
    """Invalid model or policy. ``check`` names the failed invariant, ``index`` locates it."""

    def __init__(self, check: str, message: str, index=None):
        self.check = check
        self.index = index
        loc = f" at index {index}" if index is not None else ""
        super().__init__(f"{check}{loc}: {message}")


class OracleTooLarge(MDPError):
    pass


def _frozen(x, dtype=np.float64) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _first_bad(mask: np.ndarray):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0]) if len(idx) else None


# ---------------------------------------------------------------------------
# invariant checks shared by constructors and the CLI


@dataclass(frozen=True)
class InvariantResult:
    check: str
    ok: bool
    detail: str = ""
    index: tuple | None = None


def check_mdp_arrays(P, r, mu, tol: float = PROB_TOL) -> list[InvariantResult]:
    """Run every structural check on raw model arrays without raising."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    mu = np.asarray(mu, dtype=float)
    out: list[InvariantResult] = []
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        return [InvariantResult("transition.shape", False, f"expected (S, A, S), got {P.shape}")]
    S, A, _ = P.shape
    out.append(InvariantResult("transition.shape", True))
    if r.shape != (S, A):
        out.append(InvariantResult("mean_reward.shape", False, f"expected {(S, A)}, got {r.shape}"))
        return out
    if mu.shape != (S,):
        out.append(InvariantResult("initial_dist.shape", False, f"expected {(S,)}, got {mu.shape}"))
        return out

    bad = _first_bad(P < 0)
    out.append(InvariantResult("transition.nonnegative", bad is None, "negative probability", bad))
    rows = np.abs(P.sum(axis=2) - 1.0) > tol
    bad = _first_bad(rows)
    detail = "" if bad is None else f"row sums to {P.sum(axis=2)[bad]!r}"
    out.append(InvariantResult("transition.rows_sum_to_one", bad is None, detail, bad))

    bad = _first_bad(mu < 0)
    out.append(InvariantResult("initial_dist.nonnegative", bad is None, "negative mass", bad))
    ok = abs(mu.sum() - 1.0) <= tol
    out.append(InvariantResult("initial_dist.sums_to_one", ok, "" if ok else f"sums to {mu.sum()!r}"))

    bad = _first_bad((r < 0) | (r > 1))
    out.append(InvariantResult("mean_reward.in_unit_interval", bad is None, "reward outside [0, 1]", bad))
    return out


def _raise_first(results: list[InvariantResult]) -> None:
    for res in results:
        if not res.ok:
            raise MDPError(res.check, res.detail or "invariant violated", res.index)


# ---------------------------------------------------------------------------
# reward model


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Distribution of the observed reward given its mean ``r(s, a)``.

    ``bernoulli`` draws ``scale * Bernoulli(r / scale)`` so rewards live on
    ``{0, scale}``; ``scale = 1`` is the plain Bernoulli(r) model.
    ``deterministic`` always returns the mean.
    """

    kind: str = "bernoulli"
    scale: float | np.ndarray = 1.0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "deterministic"):
            raise MDPError("reward_model.kind", f"unknown reward model {self.kind!r}")
        object.__setattr__(self, "scale", _frozen(self.scale))

    def scale_for(self, r: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.scale, np.shape(r))

    def upper_bound(self, r: np.ndarray) -> np.ndarray:
        """Largest reward that can be observed at each pair."""
        r = np.asarray(r, dtype=float)
        if self.kind == "deterministic":
            return r
        return np.where(r > 0, self.scale_for(r), 0.0)

    def variance(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "deterministic":
            return np.zeros_like(r)
        return r * (self.scale_for(r) - r)

    def sample(self, mean: np.ndarray, scale: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Draw rewards from per-draw ``mean``/``scale`` using uniforms ``u``."""
        if self.kind == "deterministic":
            return np.asarray(mean, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(scale > 0, mean / scale, 0.0)
        return np.where(u < p, scale, 0.0)

    def validate(self, r: np.ndarray) -> None:
        if self.kind == "bernoulli":
            sc = self.scale_for(r)
            bad = _first_bad((r > sc + PROB_TOL) | (sc > 1 + PROB_TOL) | (sc < 0))
            if bad is not None:
                raise MDPError("reward_model.scale", "Bernoulli scale must lie in [r, 1]", bad)

    def to_json(self) -> dict:
        scale = self.scale.tolist() if self.scale.ndim else float(self.scale)
        return {"kind": self.kind, "scale": scale}

    @classmethod
    def from_json(cls, d: dict) -> "RewardModel":
        return cls(kind=d.get("kind", "bernoulli"), scale=d.get("scale", 1.0))


# ---------------------------------------------------------------------------
# core types


@dataclass(frozen=True, eq=False)
class TabularMDP:
    P: np.ndarray
    r: np.ndarray
    mu: np.ndarray
    H: int
    reward_model: RewardModel = field(default_factory=RewardModel)
    bounded_total_reward: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P))
        object.__setattr__(self, "r", _frozen(self.r))
        object.__setattr__(self, "mu", _frozen(self.mu))
        if int(self.H) != self.H or self.H < 1:
            raise MDPError("horizon", f"H must be a positive integer, got {self.H!r}")
        object.__setattr__(self, "H", int(self.H))
        _raise_first(check_mdp_arrays(self.P, self.r, self.mu))
        self.reward_model.validate(self.r)

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]

    def replace(self, **changes) -> "TabularMDP":
        kw = dict(P=self.P, r=self.r, mu=self.mu, H=self.H, reward_model=self.reward_model,
                  bounded_total_reward=self.bounded_total_reward, name=self.name)
        kw.update(changes)
        return TabularMDP(**kw)

    def to_json(self) -> dict:
        return {
            "schema": MDP_SCHEMA,
            "name": self.name,
            "S": self.S,
            "A": self.A,
            "H": self.H,
            "transition": self.P.tolist(),
            "mean_reward": self.r.tolist(),
            "initial_dist": self.mu.tolist(),
            "reward_model": self.reward_model.to_json(),
            "bounded_total_reward": self.bounded_total_reward,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TabularMDP":
        if d.get("schema") != MDP_SCHEMA:
            raise MDPError("schema", f"expected {MDP_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(
            P=d["transition"],
            r=d["mean_reward"],
            mu=d["initial_dist"],
            H=d["H"],
            reward_model=RewardModel.from_json(d.get("reward_model", {})),
            bounded_total_reward=bool(d.get("bounded_total_reward", False)),
            name=d.get("name", ""),
        )

    def digest(self) -> str:
        return json_digest(self.to_json())


@dataclass(frozen=True, eq=False)
class Policy:
    """Non-stationary policy ``per_step[h, s, a] = pi_h(a | s)``."""

    per_step: np.ndarray

    def __post_init__(self):
        pi = _frozen(self.per_step)
        if pi.ndim != 3:
            raise MDPError("policy.shape", f"expected (H, S, A), got {pi.shape}")
        bad = _first_bad(pi < 0)
        if bad is not None:
            raise MDPError("policy.nonnegative", "negative probability", bad)
        bad = _first_bad(np.abs(pi.sum(axis=2) - 1.0) > PROB_TOL)
        if bad is not None:
            raise MDPError("policy.rows_sum_to_one", "action probabilities do not sum to 1", bad)
        object.__setattr__(self, "per_step", pi)

    @property
    def H(self) -> int:
        return self.per_step.shape[0]

    @property
    def S(self) -> int:
        return self.per_step.shape[1]

    @property
    def A(self) -> int:
        return self.per_step.shape[2]

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @classmethod
    def from_actions(cls, actions, A: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(A)[actions])

    @classmethod
    def random(cls, H: int, S: int, A: int, seed: int, concentration: float = 1.0) -> "Policy":
        rng = np.random.default_rng(seed)
        return cls(rng.dirichlet(np.full(A, concentration), size=(H, S)))

    def is_deterministic(self) -> bool:
        return bool(np.all((self.per_step == 0) | (self.per_step == 1)))

    def actions(self) -> np.ndarray:
        """Greedy action per (h, s); exact for deterministic policies."""
        return self.per_step.argmax(axis=2)

    def to_json(self) -> dict:
        return {"schema": POLICY_SCHEMA, "H": self.H, "S": self.S, "A": self.A,
                "per_step": self.per_step.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Policy":
        if d.get("schema") != POLICY_SCHEMA:
            raise MDPError("schema", f"expected {POLICY_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(d["per_step"])

    def digest(self) -> str:
        return json_digest(self.to_json())


@dataclass(frozen=True, eq=False)
class ValueSolution:
    """``V`` has shape (H + 1, S) with the boundary row ``V[H] = 0``."""

    V: np.ndarray
    Q: np.ndarray
    value: float


@dataclass(frozen=True, eq=False)
class OccupancyMeasures:
    xi_state: np.ndarray  # (H, S)
    xi_state_action: np.ndarray  # (H, S, A)

    def total_visitation(self) -> np.ndarray:
        """sum_h xi_h(s, a)."""
        return self.xi_state_action.sum(axis=0)


def json_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _check_compatible(mdp: TabularMDP, policy: Policy) -> None:
    for axis, want, got in (("H", mdp.H, policy.H), ("S", mdp.S, policy.S), ("A", mdp.A, policy.A)):
        if want != got:
            raise MDPError("policy.shape", f"policy {axis}={got} but mdp {axis}={want}", axis)


# ---------------------------------------------------------------------------
# solvers


def evaluate_policy(mdp: TabularMDP, policy: Policy) -> ValueSolution:
    """Backward recursion ``Q_h = r + P V_{h+1}``, ``V_h = <pi_h, Q_h>``."""
    _check_compatible(mdp, policy)
    H, S, A = mdp.H, mdp.S, mdp.A
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r + mdp.P @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", policy.per_step[h], Q[h])
    return ValueSolution(V=V, Q=Q, value=float(mdp.mu @ V[0]))


def occupancy_measures(mdp: TabularMDP, policy: Policy) -> OccupancyMeasures:
    """Forward recursion for the reaching probabilities xi_h(s) and xi_h(s, a)."""
    _check_compatible(mdp, policy)
    H, S, A = mdp.H, mdp.S, mdp.A
    xs = np.zeros((H, S))
    xsa = np.zeros((H, S, A))
    xs[0] = mdp.mu
    for h in range(H):
        xsa[h] = xs[h][:, None] * policy.per_step[h]
        if h + 1 < H:
            xs[h + 1] = np.einsum("sa,sat->t", xsa[h], mdp.P)
    return OccupancyMeasures(xi_state=xs, xi_state_action=xsa)


def dual_policy_value(mdp: TabularMDP, occ: OccupancyMeasures) -> float:
    if occ.xi_state_action.shape != (mdp.H, mdp.S, mdp.A):
        raise MDPError("occupancy.shape", f"expected {(mdp.H, mdp.S, mdp.A)}, got {occ.xi_state_action.shape}")
    return float(np.sum(occ.total_visitation() * mdp.r))


def optimal_policy(mdp: TabularMDP) -> tuple[Policy, ValueSolution]:
    """Backward induction; ties go to the lowest action index."""
    H, S, A = mdp.H, mdp.S, mdp.A
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    acts = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r + mdp.P @ V[h + 1]
        acts[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h][np.arange(S), acts[h]]
    return Policy.from_actions(acts, A), ValueSolution(V=V, Q=Q, value=float(mdp.mu @ V[0]))


def enumerate_policy_value(mdp: TabularMDP, policy: Policy, cap: int = 10**7) -> float:
    """Exact value by summing over every state/action sequence (brute-force oracle)."""
    _check_compatible(mdp, policy)
    H, S, A = mdp.H, mdp.S, mdp.A
    size = S**H * A**H
    if size > cap:
        raise OracleTooLarge("oracle.size", f"instance too large for oracle: {size} trajectories > cap {cap}")
    P, r, mu, pi = mdp.P, mdp.r, mdp.mu, policy.per_step
    terms = []
    for states in itertools.product(range(S), repeat=H):
        for actions in itertools.product(range(A), repeat=H):
            prob = mu[states[0]]
            total = 0.0
            for h in range(H):
                s, a = states[h], actions[h]
                prob *= pi[h, s, a]
                if h + 1 < H:
                    prob *= P[s, a, states[h + 1]]
                total += r[s, a]
            if prob:
                terms.append(prob * total)
    return math.fsum(terms)


def enumerate_deterministic_policies(H: int, S: int, A: int):
    """All A^(H*S) deterministic non-stationary policies."""
    for flat in itertools.product(range(A), repeat=H * S):
        yield Policy.from_actions(np.array(flat).reshape(H, S), A)


@dataclass(frozen=True)
class BoundedRewardCheck:
    holds: bool
    max_total_reward: float
    witness: list  # [(s, a), ...] attaining the maximum


def verify_bounded_total_reward(mdp: TabularMDP, method: str = "dp", cap: int = 10**7,
                                tol: float = 1e-12) -> BoundedRewardCheck:
    """Check that every realizable trajectory collects at most 1 reward in total.

    Uses the reward model's upper bound per pair and any action sequence.
    ``method="dp"`` runs a max-plus backward pass over the transition support,
    ``method="enumerate"`` walks every state/action sequence (subject to ``cap``).
    """
    ub = mdp.reward_model.upper_bound(mdp.r)
    support = mdp.P > 0
    H, S, A = mdp.H, mdp.S, mdp.A
    if method == "enumerate":
        if S**H * A**H > cap:
            raise OracleTooLarge("oracle.size", "unverifiable: instance too large for enumeration")
        best, witness = -np.inf, []
        for states in itertools.product(range(S), repeat=H):
            if mdp.mu[states[0]] <= 0:
                continue
            for actions in itertools.product(range(A), repeat=H):
                if any(not support[states[h], actions[h], states[h + 1]] for h in range(H - 1)):
                    continue
                total = math.fsum(ub[s, a] for s, a in zip(states, actions))
                if total > best:
                    best, witness = total, list(zip(states, actions))
        return BoundedRewardCheck(best <= 1 + tol, float(best), witness)
    if method != "dp":
        raise ValueError(f"unknown method {method!r}")

    M = np.zeros((H + 1, S))
    nxt = np.zeros((H, S, A), dtype=int)
    act = np.zeros((H, S), dtype=int)
    for h in range(H - 1, -1, -1):
        cont = np.where(support, M[h + 1][None, None, :], -np.inf)
        nxt[h] = cont.argmax(axis=2)
        val = ub + (cont.max(axis=2) if h + 1 < H else 0.0)
        act[h] = val.argmax(axis=1)
        M[h] = val.max(axis=1)
    starts = np.where(mdp.mu > 0, M[0], -np.inf)
    s = int(starts.argmax())
    witness = []
    for h in range(H):
        a = int(act[h, s])
        witness.append((s, a))
        s = int(nxt[h, s, a])
    best = float(starts.max())
    return BoundedRewardCheck(best <= 1 + tol, best, witness)


# ---------------------------------------------------------------------------
# generators used by tests and experiments


def random_mdp(S: int, A: int, H: int, seed: int, reward_high: float = 1.0,
               concentration: float = 1.0, name: str = "") -> TabularMDP:
    """Dirichlet transitions, Dirichlet initial distribution, rewards ~ U(0, reward_high)."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(S, concentration), size=(S, A))
    mu = rng.dirichlet(np.ones(S))
    r = rng.uniform(0.0, reward_high, size=(S, A))
    return TabularMDP(P=P, r=r, mu=mu, H=H, name=name or f"random-S{S}-A{A}-H{H}-seed{seed}")


def deterministic_chain(S: int, H: int, final_reward: float = 1.0) -> TabularMDP:
    """Single-action chain 0 -> 1 -> ... -> S-1 (absorbing); reward only at step H."""
    if S < H:
        raise MDPError("shape", "chain needs at least H states so step H is a distinct state")
    P = np.zeros((S, 1, S))
    for s in range(S):
        P[s, 0, min(s + 1, S - 1)] = 1.0
    r = np.zeros((S, 1))
    r[H - 1, 0] = final_reward
    mu = np.zeros(S)
    mu[0] = 1.0
    return TabularMDP(P=P, r=r, mu=mu, H=H, reward_model=RewardModel("deterministic"),
                      bounded_total_reward=final_reward <= 1, name=f"chain-S{S}-H{H}")
