"""Anchor-point linear MDPs: generation, weight recovery and anchor-only plug-in estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DatasetCounts, empirical_min_visit, sample_generative
from .mdp import InvariantResult, MDPError, RewardModel, TabularMDP
from .plugin import EmpiricalMDP

LINEAR_SCHEMA = "linear-anchor-mdp/1"
STYLES = ("uniform", "unit")
WEIGHT_TOL = 1e-10
IDENTITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LinearAnchorMDP:
    """Features phi(s,a) = sum_k lam[s,a,k] phi(s_k,a_k) over ``d`` anchor pairs.

    ``transition_param`` is the d x S matrix M with P(.|s,a) = phi(s,a) @ M, and
    ``reward_param`` is theta_r with r(s,a) = phi(s,a) @ theta_r.
    """

    mdp: TabularMDP
    features: np.ndarray  # (S, A, d)
    anchors: tuple  # ((s_k, a_k), ...)
    weights: np.ndarray  # (S, A, d)
    reward_param: np.ndarray  # (d,)
    transition_param: np.ndarray  # (d, S)

    @property
    def d(self) -> int:
        return len(self.anchors)

    @property
    def anchor_features(self) -> np.ndarray:
        return np.stack([self.features[s, a] for s, a in self.anchors])

    def to_json(self) -> dict:
        return {"schema": LINEAR_SCHEMA, "mdp": self.mdp.to_json(), "features": self.features.tolist(),
                "anchors": [list(p) for p in self.anchors], "weights": self.weights.tolist(),
                "reward_param": self.reward_param.tolist(), "transition_param": self.transition_param.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "LinearAnchorMDP":
        if d.get("schema") != LINEAR_SCHEMA:
            raise MDPError("schema", f"expected schema {LINEAR_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(mdp=TabularMDP.from_json(d["mdp"]), features=np.asarray(d["features"], float),
                   anchors=tuple(tuple(int(x) for x in p) for p in d["anchors"]),
                   weights=np.asarray(d["weights"], float), reward_param=np.asarray(d["reward_param"], float),
                   transition_param=np.asarray(d["transition_param"], float))


def check_linear_invariants(lin: LinearAnchorMDP) -> list[InvariantResult]:
    S, A, d = lin.mdp.S, lin.mdp.A, lin.d
    lam, phi = lin.weights, lin.features
    out = [InvariantResult("anchors.count", lam.shape == (S, A, d) and phi.shape[:2] == (S, A),
                           f"weights {lam.shape}, features {phi.shape}, d={d}")]
    if not out[0].ok:
        return out
    out.append(InvariantResult("weights.nonnegative", bool(lam.min() >= 0), f"min {lam.min():.3g}"))
    err = np.abs(lam.sum(-1) - 1).max()
    out.append(InvariantResult("weights.sum_to_one", bool(err <= WEIGHT_TOL), f"max error {err:.3g}"))
    err = np.abs(np.einsum("sak,kj->saj", lam, lin.anchor_features) - phi).max()
    out.append(InvariantResult("features.convex_combination", bool(err <= IDENTITY_TOL), f"max error {err:.3g}"))
    ia = [s for s, _ in lin.anchors], [a for _, a in lin.anchors]
    err = np.abs(lam @ lin.mdp.r[ia] - lin.mdp.r).max()
    out.append(InvariantResult("reward.consistency", bool(err <= IDENTITY_TOL), f"max error {err:.3g}"))
    err = np.abs(np.einsum("sak,kt->sat", lam, lin.mdp.P[ia]) - lin.mdp.P).max()
    out.append(InvariantResult("transition.consistency", bool(err <= IDENTITY_TOL), f"max error {err:.3g}"))
    err = max(np.abs(phi @ lin.reward_param - lin.mdp.r).max(),
              np.abs(phi @ lin.transition_param - lin.mdp.P).max())
    out.append(InvariantResult("features.linear_model", bool(err <= IDENTITY_TOL), f"max error {err:.3g}"))
    return out


def _anchor_features(rng: np.random.Generator, d: int) -> np.ndarray:
    # random invertible map; redraw on the rare ill-conditioned sample
    while True:
        F = np.eye(d) + 0.5 * rng.normal(size=(d, d)) / np.sqrt(d)
        if np.linalg.cond(F) < 1e3:
            return F


def generate_linear_instance(S: int, A: int, H: int, d: int, seed: int, style: str = "uniform",
                             concentration: float = 1.0) -> LinearAnchorMDP:
    """Weights-first construction: anchor models and simplex weights define P, r and phi.

    With ``d == S * A`` every pair is its own anchor and the features are one-hot.
    ``uniform`` keeps every mean reward at most 1/H (bounded total reward); ``unit`` draws
    anchor rewards in [0, 1].
    """
    if style not in STYLES:
        raise MDPError("style", f"unknown style {style!r}; choose from {STYLES}")
    if not 1 <= d <= S * A or H < 1:
        raise MDPError("shape", f"need 1 <= d <= S*A and H >= 1; got S={S}, A={A}, d={d}, H={H}")
    rng = np.random.default_rng(seed)
    one_hot = d == S * A
    flat = np.arange(S * A) if one_hot else np.sort(rng.choice(S * A, size=d, replace=False))
    anchors = tuple((int(f // A), int(f % A)) for f in flat)
    P_anchor = rng.dirichlet(np.full(S, concentration), size=d)
    u = rng.uniform(0.0, 1.0, size=d)
    if style == "uniform":
        r_anchor = (u / u.max()) / H
        model = RewardModel("bernoulli", 1.0 / H)
    else:
        r_anchor = u
        model = RewardModel("bernoulli", 1.0)
    lam = rng.dirichlet(np.ones(d), size=(S, A))
    for k, (s, a) in enumerate(anchors):
        lam[s, a] = 0.0
        lam[s, a, k] = 1.0
    F = np.eye(d) if one_hot else _anchor_features(rng, d)
    mu = rng.dirichlet(np.ones(S))
    if one_hot:
        P = P_anchor.reshape(S, A, S).copy()
        r = r_anchor.reshape(S, A).copy()
    else:
        P = np.einsum("sak,kt->sat", lam, P_anchor)
        P /= P.sum(-1, keepdims=True)
        r = np.minimum(lam @ r_anchor, r_anchor.max())
    mdp = TabularMDP(P=P, r=r, mu=mu, H=H, reward_model=model, bounded_total_reward=style == "uniform",
                     name=f"linear-{style}-S{S}-A{A}-H{H}-d{d}-seed{seed}")
    F_inv = np.linalg.inv(F)
    return LinearAnchorMDP(mdp=mdp, features=lam @ F, anchors=anchors, weights=lam,
                           reward_param=F_inv @ r_anchor, transition_param=F_inv @ P_anchor)


# ---------------------------------------------------------------------------
# weight recovery


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _polish(G: np.ndarray, target: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Equality-constrained least squares on the current support; kept only if it stays feasible."""
    T = np.nonzero(lam > 1e-12)[0]
    if len(T) == 0:
        return lam
    Gt = G[T]
    k = len(T)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = Gt @ Gt.T
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.concatenate([Gt @ target, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
    if sol.min() < 0:
        return lam
    out = np.zeros_like(lam)
    out[T] = sol / sol.sum()
    old = np.linalg.norm(G.T @ lam - target)
    return out if np.linalg.norm(G.T @ out - target) <= old else lam


def recover_anchor_weights(phi_target, anchor_features, tol: float = 1e-6, max_iter: int = 20000) -> np.ndarray:
    """Simplex weights lam with anchor_features.T @ lam = phi_target.

    Projected accelerated gradient on the least-squares objective over the simplex, then an
    active-set polish. Raises when the best residual exceeds ``tol`` (target outside the hull).
    """
    G = np.asarray(anchor_features, dtype=float)  # (k, d): one row per anchor
    target = np.asarray(phi_target, dtype=float)
    if G.ndim != 2 or target.shape != (G.shape[1],):
        raise MDPError("shape", f"anchor features {G.shape} incompatible with target {target.shape}")
    k = G.shape[0]
    step = 1.0 / max(np.linalg.norm(G @ G.T, 2), 1e-300)
    lam = np.full(k, 1.0 / k)
    y, t = lam.copy(), 1.0
    for _ in range(max_iter):
        nxt = project_simplex(y - step * (G @ (G.T @ y - target)))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = nxt + ((t - 1.0) / t_next) * (nxt - lam)
        done = np.abs(nxt - lam).max() < 1e-15
        lam, t = nxt, t_next
        if done:
            break
    lam = _polish(G, target, lam)
    residual = float(np.abs(G.T @ lam - target).max())
    if residual > tol:
        raise MDPError("not_in_convex_hull", f"target not in convex hull of anchors: residual {residual:.3g}")
    return lam


# ---------------------------------------------------------------------------
# anchor-only estimation


def sample_anchor_dataset(lin: LinearAnchorMDP, n: int, seed: int) -> Dataset:
    """``n`` generative transitions spread as evenly as possible over the anchors."""
    if n < lin.d:
        raise MDPError("anchor_samples", f"need n >= d = {lin.d}, got {n}")
    return sample_generative(lin.mdp, list(lin.anchors), n, seed)


def build_anchor_empirical_mdp(anchor_counts: DatasetCounts, anchors, lam, mu, H: int,
                               reward_model: RewardModel | None = None) -> EmpiricalMDP:
    """P_hat(.|s,a) = sum_k lam[s,a,k] P_hat(.|s_k,a_k) and likewise r_hat, for every pair."""
    lam = np.asarray(lam, dtype=float)
    s_idx = np.array([s for s, _ in anchors])
    a_idx = np.array([a for _, a in anchors])
    n_k = anchor_counts.n_sa[s_idx, a_idx].astype(float)
    if (n_k == 0).any():
        k = int(np.argmax(n_k == 0))
        raise MDPError("anchor_coverage", f"anchor {anchors[k]} has no samples", anchors[k])
    P_k = anchor_counts.n_sas[s_idx, a_idx] / n_k[:, None]
    r_k = anchor_counts.reward_sum[s_idx, a_idx] / n_k
    P_hat = np.einsum("sak,kt->sat", lam, P_k)
    r_hat = np.clip(lam @ r_k, 0.0, 1.0)
    one_hot = np.all((lam == 0) | (lam == 1))
    if not one_hot:
        P_hat /= P_hat.sum(-1, keepdims=True)
    model = TabularMDP(P=P_hat, r=r_hat, mu=mu, H=H, reward_model=reward_model or RewardModel("deterministic"),
                       name="anchor-empirical")
    return EmpiricalMDP(mdp=model, counts=anchor_counts, unvisited=np.zeros(lam.shape[:2], dtype=bool),
                        fallback="anchor_combination")


def anchor_min_visit(counts: DatasetCounts, anchors) -> tuple[int, tuple[int, int]]:
    return empirical_min_visit(counts, support=set(anchors))


def convexity_transport(lin: LinearAnchorMDP, emp: EmpiricalMDP, V: np.ndarray):
    """(lhs, rhs) per pair: |(P - P_hat) V| and sum_k lam_k |(P_k - P_hat_k) V|."""
    s_idx = [s for s, _ in lin.anchors]
    a_idx = [a for _, a in lin.anchors]
    dev = (lin.mdp.P - emp.mdp.P) @ V
    return np.abs(dev), lin.weights @ np.abs(dev[s_idx, a_idx])


def anchor_variance_split(lin: LinearAnchorMDP, V: np.ndarray) -> dict:
    """Mixture variance = anchor-averaged variance + spread of anchor means (a Jensen gap >= 0)."""
    s_idx = [s for s, _ in lin.anchors]
    a_idx = [a for _, a in lin.anchors]
    Pk = lin.mdp.P[s_idx, a_idx]
    mean_k, second_k = Pk @ V, Pk @ (V * V)
    var_k = second_k - mean_k**2
    lam = lin.weights
    mean_mix = lin.mdp.P @ V
    var_mix = lin.mdp.P @ (V * V) - mean_mix**2
    return {"avg_variance": lam @ var_k, "mixture_variance": var_mix,
            "jensen_gap": lam @ mean_k**2 - mean_mix**2, "avg_second_moment": lam @ second_k,
            "mixture_second_moment": var_mix + mean_mix**2}
