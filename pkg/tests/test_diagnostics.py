import json
import math

import numpy as np
import pytest

from offline_plugin.data import count_statistics, sample_dataset
from offline_plugin.diagnostics import (
    bernstein_bound,
    check_mis_variance_bound,
    check_recursion_evaluation,
    check_recursion_optimization,
    default_iota,
    s_factor_deviation_bound,
    solve_recursion_numeric,
    total_variance,
    transition_variance,
    value_difference_decomposition,
    value_powers,
)
from offline_plugin.hard_instances import (
    bounded_reward_random_instance,
    hard_pair,
    lower_bound_c0,
    ope_hard_instance,
    opo_hard_instance,
)
from offline_plugin.mdp import (
    MDPError,
    Policy,
    deterministic_chain,
    evaluate_policy,
    occupancy_measures,
    random_mdp,
)
from offline_plugin.plugin import build_empirical_mdp

from . import oracles


def empirical(mdp, K, seed, behavior=None):
    behavior = behavior or Policy.uniform(mdp.H, mdp.S, mdp.A)
    return build_empirical_mdp(count_statistics(sample_dataset(mdp, behavior, K, seed)), mdp.mu, mdp.H,
                               reward_model=mdp.reward_model)


# --- value-difference decomposition -------------------------------------------


def test_decomposition_vanishes_on_truth(ref):
    rep = value_difference_decomposition(ref, ref, Policy.uniform(4, 3, 2))
    assert rep.reward_term == 0.0 and not rep.transition_terms.any() and rep.total == 0.0


def test_decomposition_isolates_reward_error(ref):
    pi = Policy.uniform(4, 3, 2)
    est = ref.replace(r=ref.r * 0.5)
    rep = value_difference_decomposition(ref, est, pi)
    assert not rep.transition_terms.any()
    v, v_hat = evaluate_policy(ref, pi).value, evaluate_policy(est, pi).value
    assert rep.reward_term == pytest.approx(v - v_hat, abs=1e-12)


def test_decomposition_residual_on_data(ref):
    pi = Policy.random(4, 3, 2, seed=1)
    for seed in range(10):
        rep = value_difference_decomposition(ref, empirical(ref, 1000, seed), pi)
        assert rep.residual <= 1e-9
        assert abs(rep.total - (rep.value - rep.value_hat)) <= 1e-9
        assert len(rep.transition_terms) == 4
    json.dumps(rep.to_json())


def test_decomposition_shape_mismatch(ref):
    with pytest.raises(MDPError):
        value_difference_decomposition(ref, random_mdp(2, 2, 4, seed=0), Policy.uniform(4, 3, 2))


# --- total variance -------------------------------------------------------------


def test_powers_stay_in_unit_interval():
    V = np.array([[0.0, 0.3, 1.0]])
    np.testing.assert_allclose(value_powers(V, 3), V**8)
    assert value_powers(V, 40).max() <= 1.0


def test_variance_matches_row_oracle(seed7):
    W = np.random.default_rng(0).random(3)
    want = [[oracles.row_variance(seed7.P[s, a], W) for a in range(2)] for s in range(3)]
    np.testing.assert_allclose(transition_variance(seed7.P, W), want, atol=1e-15)


def test_deterministic_model_has_zero_variance():
    m = deterministic_chain(5, 4)
    pi = Policy.uniform(4, 5, 1)
    V = evaluate_policy(m, pi).V
    occ = occupancy_measures(m, pi)
    for i in range(4):
        assert total_variance(m, occ, V, i).value == 0.0


def test_chain_indicator_variance():
    m = ope_hard_instance(2, 0.5)
    occ = occupancy_measures(m, Policy.uniform(2, 2, 1))
    V = np.zeros((3, 2))
    V[1, 1] = 1.0
    for i in range(4):
        prof = total_variance(m, occ, V, i)
        assert prof.value == pytest.approx(0.25, abs=1e-15)
        np.testing.assert_allclose(prof.per_h, [0.25, 0.0])


def test_high_powers_settle(ref):
    pi = Policy.uniform(4, 3, 2)
    V = evaluate_policy(ref, pi).V
    occ = occupancy_measures(ref, pi)
    seq = [total_variance(ref, occ, V, i).value for i in range(12)]
    assert all(0 <= x <= 4 for x in seq)
    assert abs(seq[-1] - seq[-2]) <= 1e-9


def test_values_outside_unit_interval_rejected(ref):
    occ = occupancy_measures(ref, Policy.uniform(4, 3, 2))
    with pytest.raises(MDPError):
        total_variance(ref, occ, np.full((5, 3), 1.5), 0)


# --- evaluation recursion ---------------------------------------------------------


def test_evaluation_recursion_on_truth(ref):
    pi = Policy.uniform(4, 3, 2)
    for i in range(3):
        rep = check_recursion_evaluation(ref, ref, pi, i)
        assert rep.extras["cross"] == 0.0
        assert rep.holds and rep.lhs <= 2 ** (i + 1)


def test_evaluation_recursion_on_random_datasets(ref):
    pi = Policy.uniform(4, 3, 2)
    for seed in range(50):
        rep = check_recursion_evaluation(ref, empirical(ref, 50, seed), pi, 0)
        assert rep.holds and rep.extras["holds_tight"], rep.to_json()


def test_evaluation_recursion_deterministic_model():
    m = deterministic_chain(4, 3)
    rep = check_recursion_evaluation(m, m, Policy.uniform(3, 4, 1), 1)
    assert rep.lhs == 0.0 and rep.holds


def test_checkers_refuse_unbounded_instances(seed7):
    pi = Policy.uniform(4, 3, 2)
    assert not seed7.bounded_total_reward
    with pytest.raises(MDPError, match="total reward"):
        check_recursion_evaluation(seed7, seed7, pi, 0)
    with pytest.raises(MDPError):
        check_recursion_optimization(seed7, seed7, 0)
    with pytest.raises(MDPError):
        check_mis_variance_bound(seed7, pi)


# --- optimization recursion ----------------------------------------------------------


def test_difference_mode_vanishes_on_truth(ref):
    rep = check_recursion_optimization(ref, ref, 0, mode="difference")
    assert rep.lhs == 0.0 and rep.holds


@pytest.mark.parametrize("mode", ["pi_star", "difference"])
def test_optimization_recursion_on_random_datasets(ref, mode):
    for seed in range(50):
        emp = empirical(ref, 40, seed)
        for i in (0, 1):
            rep = check_recursion_optimization(ref, emp, i, mode=mode)
            assert rep.holds, rep.to_json()


def test_optimization_recursion_on_planning_instance():
    H, n = 8, 400
    _, p2 = hard_pair(H, n)
    truth = opo_hard_instance(H, p2, lower_bound_c0(1.0, H), n)
    for seed in range(20):
        rep = check_recursion_optimization(truth, empirical(truth, 30, seed), 1, mode="difference")
        assert rep.holds


def test_unknown_mode(ref):
    with pytest.raises(ValueError):
        check_recursion_optimization(ref, ref, 0, mode="other")


# --- MIS variance bound ----------------------------------------------------------------


def test_mis_zero_reward():
    m = bounded_reward_random_instance(3, 2, 4, seed=0)
    m = m.replace(r=np.zeros((3, 2)))
    rep = check_mis_variance_bound(m, Policy.uniform(4, 3, 2))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds


def test_mis_holds_on_reference(ref):
    for k in range(10):
        assert check_mis_variance_bound(ref, Policy.random(4, 3, 2, seed=k)).holds


def test_mis_chain_closed_form():
    m = ope_hard_instance(2, 0.5)
    rep = check_mis_variance_bound(m, Policy.uniform(2, 2, 1))
    # step 1 from s2: next value is 1/2 or 0 with equal odds, variance 1/16
    assert rep.lhs == pytest.approx(1 / 16, abs=1e-15)
    assert rep.rhs == pytest.approx(3 * 0.75, abs=1e-15)


@pytest.mark.parametrize("H", [4, 16, 64, 256])
def test_total_variance_horizon_free(H):
    m = bounded_reward_random_instance(4, 2, H, seed=3)
    rep = check_mis_variance_bound(m, Policy.uniform(H, 4, 2))
    assert rep.holds and rep.rhs <= 3.0


# --- deviation bounds ------------------------------------------------------------------


def test_bernstein_examples():
    assert bernstein_bound(1, 0.0, delta=0.5) == pytest.approx(math.log(4) / 3, abs=1e-12)
    widths = [bernstein_bound(n, 0.21) for n in (10, 100, 1000, 10**8)]
    assert all(a > b for a, b in zip(widths, widths[1:])) and widths[-1] < 1e-3
    assert bernstein_bound(100, 0.0, range_=2.0) == pytest.approx(2 * bernstein_bound(100, 0.0))
    with pytest.raises(ValueError):
        bernstein_bound(10, 0.1, delta=1.0)


def test_bernstein_coverage():
    n, p, delta, R = 500, 0.3, 0.05, 2000
    half = bernstein_bound(n, p * (1 - p), delta=delta)
    means = np.random.default_rng(17).binomial(n, p, size=R) / n
    rate = np.mean(np.abs(means - p) > half)
    assert rate <= delta + 3 * math.sqrt(delta * (1 - delta) / R)


def test_s_factor_shape():
    iota = math.log(2 / 0.05)
    assert s_factor_deviation_bound(100, 0.2, 1) == pytest.approx(math.sqrt(0.2 * iota / 100) + iota / 100)
    root = lambda S: s_factor_deviation_bound(100, 0.2, S) - S * iota / 100  # noqa: E731
    assert root(4) == pytest.approx(2 * root(1))
    assert default_iota(3, 2, 4, 0.05) == pytest.approx(math.log(2 * 3 * 2 * 4 / 0.05))
    with pytest.raises(ValueError):
        s_factor_deviation_bound(0, 0.2, 1)


# --- recursion solver --------------------------------------------------------------------


def test_solver_unit_lambdas():
    sol = solve_recursion_numeric(1.0, 1.0, 64)
    assert sol.V0 <= 12.0 and sol.holds and sol.bound == 12.0


def test_solver_small_lambda1():
    vals = [solve_recursion_numeric(l1, 0.25, 1024).V0 for l1 in (2.0**-k for k in range(0, 11))]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 6 * (2.0**-10 + 0.25)


def test_solver_grid_and_iterations():
    Hs = [4**k for k in range(1, 7)]
    for l1 in (2.0**k for k in range(-10, 3)):
        for l2 in (2.0**k for k in range(-10, 3)):
            its = []
            for H in Hs:
                sol = solve_recursion_numeric(l1, l2, H)
                assert sol.holds, (l1, l2, H, sol.V0)
                its.append(sol.iterations)
            assert all(a <= b for a, b in zip(its, its[1:]))
            for H, it in zip(Hs, its):
                assert it <= max(0.0, math.log(H * l1 / l2**2, 4)) + 1
