"""Plug-in offline policy evaluation and model-based offline planning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DatasetCounts, empirical_min_visit
from .mdp import (
    Policy,
    RewardModel,
    TabularMDP,
    dual_policy_value,
    evaluate_policy,
    occupancy_measures,
    optimal_policy,
)

FALLBACKS = ("self_loop_zero",)


@dataclass(frozen=True, eq=False)
class EmpiricalMDP:
    """Maximum-likelihood model built from counts.

    ``unvisited[s, a]`` marks pairs with ``n(s, a) = 0``; they carry the fallback
    model (a zero-reward self-loop) instead of a count-based estimate.
    """

    mdp: TabularMDP
    counts: DatasetCounts
    unvisited: np.ndarray
    fallback: str = "self_loop_zero"

    @property
    def min_visit(self) -> tuple[int, tuple[int, int]]:
        return empirical_min_visit(self.counts)


@dataclass(frozen=True)
class PluginEstimate:
    value: float
    dual_value: float
    min_visit: int
    min_visit_pair: tuple[int, int]
    warnings: list = field(default_factory=list)

    def __float__(self) -> float:
        return self.value


def estimate_model(counts: DatasetCounts, fallback: str = "self_loop_zero"):
    """Return (P_hat, r_hat, unvisited) from counts."""
    if fallback not in FALLBACKS:
        raise ValueError(f"unknown fallback {fallback!r}; choose from {FALLBACKS}")
    n = counts.n_sa.astype(float)
    unvisited = counts.n_sa == 0
    safe = np.where(unvisited, 1.0, n)
    P_hat = counts.n_sas / safe[:, :, None]
    r_hat = counts.reward_sum / safe
    if unvisited.any():
        s_idx, a_idx = np.nonzero(unvisited)
        P_hat[s_idx, a_idx, :] = 0.0
        P_hat[s_idx, a_idx, s_idx] = 1.0
        r_hat[s_idx, a_idx] = 0.0
    # guard against rounding pushing a mean of {0, c}-valued rewards just past c
    return P_hat, np.clip(r_hat, 0.0, 1.0), unvisited


def build_empirical_mdp(counts: DatasetCounts, mu, H: int, reward_model: RewardModel | None = None,
                        fallback: str = "self_loop_zero") -> EmpiricalMDP:
    P_hat, r_hat, unvisited = estimate_model(counts, fallback)
    model = TabularMDP(P=P_hat, r=r_hat, mu=mu, H=H,
                       reward_model=reward_model or RewardModel("deterministic"),
                       name="empirical")
    return EmpiricalMDP(mdp=model, counts=counts, unvisited=unvisited, fallback=fallback)


def ope_plugin(emp: EmpiricalMDP, policy: Policy) -> PluginEstimate:
    """hat v^pi by DP on the empirical MDP, with its occupancy-weighted (dual) form alongside."""
    value = evaluate_policy(emp.mdp, policy).value
    occ = occupancy_measures(emp.mdp, policy)
    dual = dual_policy_value(emp.mdp, occ)
    warnings = []
    if emp.unvisited.any():
        reached = emp.unvisited & (occ.total_visitation() > 0)
        for s, a in np.argwhere(reached):
            warnings.append(f"unvisited pair (s={int(s)}, a={int(a)}) is reached under the policy; "
                            f"fallback {emp.fallback!r} applied")
    m, pair = emp.min_visit
    return PluginEstimate(value=value, dual_value=dual, min_visit=m, min_visit_pair=pair, warnings=warnings)


def opo_plan(emp: EmpiricalMDP) -> tuple[Policy, float]:
    """Model-based planning: backward induction on the empirical MDP."""
    pi_hat, sol = optimal_policy(emp.mdp)
    return pi_hat, sol.value


def suboptimality_gap(truth: TabularMDP, pi_hat: Policy) -> float:
    """v^{pi*} - v^{pi_hat}, both evaluated on the true model."""
    _, best = optimal_policy(truth)
    return best.value - evaluate_policy(truth, pi_hat).value


def exact_counts(mdp: TabularMDP, behavior: Policy, scale: float = 1e6) -> DatasetCounts:
    """Idealised counts proportional to the expected visitation under ``behavior``.

    ``n(s, a, s')`` is set to ``scale * sum_h xi_h(s, a) P(s'|s, a)`` (not rounded), so the
    resulting empirical model reproduces ``P`` and ``r`` on visited pairs up to rounding.
    """
    occ = occupancy_measures(mdp, behavior)
    visits = scale * occ.total_visitation()
    n_sas = visits[:, :, None] * mdp.P
    return DatasetCounts(n_sa=visits, n_sas=n_sas, reward_sum=visits * mdp.r, n=int(round(visits.sum())))


def exact_empirical_mdp(mdp: TabularMDP, behavior: Policy, scale: float = 1e6) -> EmpiricalMDP:
    """Empirical model whose visited rows equal the truth bit for bit (exact-data injection).

    Counts come from :func:`exact_counts`; pairs the behavior never reaches keep the fallback.
    """
    counts = exact_counts(mdp, behavior, scale)
    P_hat, r_hat, unvisited = estimate_model(counts)
    P_hat[~unvisited] = mdp.P[~unvisited]
    r_hat[~unvisited] = mdp.r[~unvisited]
    model = TabularMDP(P=P_hat, r=r_hat, mu=mdp.mu, H=mdp.H, reward_model=RewardModel("deterministic"),
                       name="exact-empirical")
    return EmpiricalMDP(mdp=model, counts=counts, unvisited=unvisited)
