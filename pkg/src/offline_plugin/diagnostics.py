"""Checkable forms of the error-analysis identities, recursions and deviation bounds.

Every checker takes concrete (truth, empirical model, policy) inputs and returns
a report with both sides of the inequality so failures can be inspected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mdp import MDPError, Policy, TabularMDP, evaluate_policy, occupancy_measures, optimal_policy
from .plugin import EmpiricalMDP, opo_plan

IDENTITY_TOL = 1e-9
MODES = ("pi_star", "difference")


def _model(m) -> TabularMDP:
    return m.mdp if isinstance(m, EmpiricalMDP) else m


def _same_shape(truth: TabularMDP, est: TabularMDP) -> None:
    if (truth.S, truth.A, truth.H) != (est.S, est.A, est.H):
        raise MDPError("shape", f"truth {(truth.S, truth.A, truth.H)} vs estimate {(est.S, est.A, est.H)}")


def value_powers(V: np.ndarray, i: int) -> np.ndarray:
    """V^(2^i) by repeated squaring, clamped to [0, 1] after each step."""
    W = np.clip(V, 0.0, 1.0)
    for _ in range(i):
        W = np.clip(W * W, 0.0, 1.0)
    return W


def _check_unit(V: np.ndarray, tol: float = 1e-9) -> None:
    if V.min() < -tol or V.max() > 1 + tol:
        raise MDPError("values.range", f"values must lie in [0, 1]; got [{V.min():.3g}, {V.max():.3g}]")


def transition_variance(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Var_{P(s,a)}(W(s')) for every pair, in centred form."""
    mean = P @ W
    return np.einsum("sat,sat->sa", P, (W[None, None, :] - mean[:, :, None]) ** 2)


def _cross(occ_xsa: np.ndarray, dP: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-step sum_{s,a} xi_h(s,a) sum_{s'} dP(s'|s,a) W_{h+1}(s')."""
    return np.array([np.sum(occ_xsa[h] * (dP @ W[h + 1])) for h in range(occ_xsa.shape[0])])


@dataclass(frozen=True)
class DecompositionReport:
    reward_term: float
    transition_terms: np.ndarray
    total: float
    residual: float
    value: float
    value_hat: float

    def to_json(self) -> dict:
        d = asdict(self)
        d["transition_terms"] = self.transition_terms.tolist()
        return d


def value_difference_decomposition(truth: TabularMDP, emp, policy: Policy) -> DecompositionReport:
    """v - v_hat as hat-occupancy-weighted reward and transition errors against the true V."""
    est = _model(emp)
    _same_shape(truth, est)
    sol = evaluate_policy(truth, policy)
    sol_hat = evaluate_policy(est, policy)
    occ = occupancy_measures(est, policy)
    reward_term = float(np.sum(occ.total_visitation() * (truth.r - est.r)))
    trans = _cross(occ.xi_state_action, truth.P - est.P, sol.V)
    total = reward_term + math.fsum(trans)
    return DecompositionReport(reward_term=reward_term, transition_terms=trans, total=total,
                               residual=abs(total - (sol.value - sol_hat.value)),
                               value=sol.value, value_hat=sol_hat.value)


@dataclass(frozen=True)
class VarianceProfile:
    power_index: int
    value: float
    per_h: np.ndarray


def total_variance(truth: TabularMDP, occ, values: np.ndarray, i: int) -> VarianceProfile:
    """sum_h sum_{s,a} xi_h(s,a) Var_{P(s,a)}(V_{h+1}(s')^(2^i)) using the true P.

    ``values`` has shape (H + 1, S); row h holds V_{h+1} in one-based step terms, so
    the variance at step h uses row h + 1.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (truth.H + 1, truth.S):
        raise MDPError("values.shape", f"expected {(truth.H + 1, truth.S)}, got {values.shape}")
    _check_unit(values)
    W = value_powers(values, i)
    xsa = occ.xi_state_action
    per_h = np.array([np.sum(xsa[h] * transition_variance(truth.P, W[h + 1])) for h in range(truth.H)])
    return VarianceProfile(power_index=i, value=math.fsum(per_h), per_h=per_h)


@dataclass
class CheckReport:
    check: str
    lhs: float
    rhs: float
    holds: bool
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check": self.check, "lhs": self.lhs, "rhs": self.rhs, "holds": bool(self.holds),
                "params": self.params, "extras": self.extras}


def _require_bounded(truth: TabularMDP, check: str) -> None:
    if not truth.bounded_total_reward:
        raise MDPError("bounded_total_reward",
                       f"{check} needs an instance certified to have total reward <= 1 per trajectory")


def _support_ok(truth: TabularMDP, est: TabularMDP) -> bool:
    return bool(np.all((est.P <= 0) | (truth.P > 0)))


def check_recursion_evaluation(truth: TabularMDP, emp, policy: Policy, i: int,
                               tol: float = IDENTITY_TOL) -> CheckReport:
    """Evaluation variance recursion at power index ``i``.

    lhs = V(i) with hat occupancy and true values; rhs = cross term at power 2^(i+1) plus 2^(i+1).
    ``rhs_tight`` keeps the reward mass and the -sum mu V_1^(2^(i+1)) term instead of bounding them.
    """
    _require_bounded(truth, "check_recursion_evaluation")
    est = _model(emp)
    _same_shape(truth, est)
    V = evaluate_policy(truth, policy).V
    occ = occupancy_measures(est, policy)
    lhs = total_variance(truth, occ, V, i).value
    m = 2 ** (i + 1)
    cross = math.fsum(_cross(occ.xi_state_action, truth.P - est.P, value_powers(V, i + 1)))
    mass = float(np.sum(occ.total_visitation() * truth.r))
    rhs = cross + m
    tight = cross + m * mass - float(truth.mu @ value_powers(V, i + 1)[0])
    return CheckReport("recursion_evaluation", lhs, rhs, lhs <= rhs + tol, params={"i": i},
                       extras={"cross": cross, "reward_mass": mass, "rhs_tight": tight,
                               "holds_tight": lhs <= tight + tol, "support_ok": _support_ok(truth, est)})


def check_recursion_optimization(truth: TabularMDP, emp, i: int, mode: str = "pi_star",
                                 tol: float = IDENTITY_TOL) -> CheckReport:
    """Optimization variance recursion for V = V^{pi*} or V = V^{pi*} - V^{pi_hat*}.

    The occupancy is that of the planned policy on the empirical model. The bracket term uses
    sum xi_hat (P_hat - P) V, which is the sign the derivation produces; the sign with
    (P - P_hat) is reported as ``rhs_as_stated``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    _require_bounded(truth, "check_recursion_optimization")
    est = _model(emp)
    _same_shape(truth, est)
    pi_hat = opo_plan(emp)[0] if isinstance(emp, EmpiricalMDP) else optimal_policy(est)[0]
    V_star = optimal_policy(truth)[1].V
    if mode == "pi_star":
        V = V_star
    else:
        V = np.clip(V_star - evaluate_policy(truth, pi_hat).V, 0.0, 1.0)
    occ = occupancy_measures(est, pi_hat)
    lhs = total_variance(truth, occ, V, i).value
    m = 2 ** (i + 1)
    dP = truth.P - est.P
    cross_m = math.fsum(_cross(occ.xi_state_action, dP, value_powers(V, i + 1)))
    cross_1 = math.fsum(_cross(occ.xi_state_action, dP, V))
    start = float(truth.mu @ V[0])
    rhs = cross_m + m * (start - cross_1)
    stated = cross_m + m * (start + cross_1)
    tight = rhs - float(truth.mu @ value_powers(V, i + 1)[0])
    return CheckReport("recursion_optimization", lhs, rhs, lhs <= rhs + tol, params={"i": i, "mode": mode},
                       extras={"cross_m": cross_m, "cross_1": cross_1, "start_value": start,
                               "rhs_as_stated": stated, "holds_as_stated": lhs <= stated + tol,
                               "rhs_tight": tight})


def check_mis_variance_bound(truth: TabularMDP, policy: Policy, tol: float = IDENTITY_TOL) -> CheckReport:
    """sum_h sum_{s,a} xi_h(s,a) Var(R(s,a) + V_{h+1}(s')) <= 3 v, with true occupancy.

    Reward and next state are drawn independently given (s, a), so the variance splits into
    the reward-model variance plus the transition variance of V_{h+1}.
    """
    _require_bounded(truth, "check_mis_variance_bound")
    sol = evaluate_policy(truth, policy)
    occ = occupancy_measures(truth, policy)
    var_r = truth.reward_model.variance(truth.r)
    per_h = [np.sum(occ.xi_state_action[h] * (var_r + transition_variance(truth.P, sol.V[h + 1])))
             for h in range(truth.H)]
    total = math.fsum(per_h)
    bound = 3.0 * sol.value
    return CheckReport("mis_variance_bound", total, bound, total <= bound + tol,
                       extras={"value": sol.value})


# ---------------------------------------------------------------------------
# deviation bounds


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def bernstein_bound(n: int, variance: float, range_: float = 1.0, delta: float = 0.05) -> float:
    """Half-width sqrt(2 Var log(2/delta) / n) + range log(2/delta) / (3 n)."""
    _check_delta(delta)
    if n < 1 or variance < 0 or range_ < 0:
        raise ValueError(f"invalid inputs n={n}, variance={variance}, range={range_}")
    log_term = math.log(2.0 / delta)
    return math.sqrt(2.0 * variance * log_term / n) + range_ * log_term / (3.0 * n)


def default_iota(S: int, A: int, H: int, delta: float, checks: int = 1) -> float:
    """log(2 S A H checks / delta)."""
    _check_delta(delta)
    return math.log(2.0 * S * A * H * checks / delta)


def s_factor_deviation_bound(n_sa: int, variance: float, S: int, delta: float = 0.05,
                             iota: float | None = None) -> float:
    """Half-width sqrt(S Var iota / n) + S iota / n, valid for data-dependent V at the cost of S.

    ``iota`` defaults to log(2 / delta).
    """
    _check_delta(delta)
    if n_sa < 1 or variance < 0 or S < 1:
        raise ValueError(f"invalid inputs n={n_sa}, variance={variance}, S={S}")
    if iota is None:
        iota = math.log(2.0 / delta)
    return math.sqrt(S * variance * iota / n_sa) + S * iota / n_sa


# ---------------------------------------------------------------------------
# recursion solver


@dataclass(frozen=True)
class RecursionSolution:
    V0: float
    bound: float
    holds: bool
    i0: int
    i_max: int
    sequence: np.ndarray  # V(0), ..., V(i_max)

    @property
    def iterations(self) -> int:
        return self.i0


def solve_recursion_numeric(lambda1: float, lambda2: float, H: float) -> RecursionSolution:
    """Worst case of V(i) <= sqrt(lambda1 V(i+1)) + lambda1 + 2^(i+1) lambda2 with V(i) <= H.

    Starts from the first index where the cap H is no tighter than the recursion and iterates
    downward. ``i0`` is the largest i with 4^i lambda2^2 <= lambda1 V(i) (or 0), the number of
    recursion steps the argument needs.
    """
    if lambda1 <= 0 or lambda2 <= 0 or H <= 0:
        raise ValueError(f"need lambda1, lambda2, H > 0; got {lambda1}, {lambda2}, {H}")
    i_max = 0
    while 2 ** (i_max + 1) * lambda2 + lambda1 + math.sqrt(lambda1 * H) < H:
        i_max += 1
    seq = np.empty(i_max + 1)
    seq[i_max] = H
    for i in range(i_max - 1, -1, -1):
        seq[i] = min(H, math.sqrt(lambda1 * seq[i + 1]) + lambda1 + 2 ** (i + 1) * lambda2)
    i0 = 0
    for i in range(i_max + 1):
        if 4.0**i * lambda2**2 <= lambda1 * seq[i]:
            i0 = i
    bound = 6.0 * (lambda1 + lambda2)
    return RecursionSolution(V0=float(seq[0]), bound=bound, holds=bool(seq[0] <= bound), i0=i0,
                             i_max=i_max, sequence=seq)
