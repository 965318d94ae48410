import numpy as np
import pytest

from offline_plugin.data import DatasetCounts, count_statistics, sample_dataset
from offline_plugin.hard_instances import hard_pair, lower_bound_c0, opo_hard_instance
from offline_plugin.mdp import Policy, TabularMDP, evaluate_policy, optimal_policy, random_mdp
from offline_plugin.plugin import (
    build_empirical_mdp,
    exact_counts,
    exact_empirical_mdp,
    ope_plugin,
    opo_plan,
    suboptimality_gap,
)
from offline_plugin.rng import derive_seed

from . import oracles


def test_deterministic_transitions_are_recovered():
    P = np.zeros((3, 2, 3))
    P[:, 0, 1] = 1.0
    P[:, 1, 2] = 1.0
    m = TabularMDP(P=P, r=np.zeros((3, 2)), mu=[1, 0, 0], H=3)
    counts = count_statistics(sample_dataset(m, Policy.uniform(3, 3, 2), K=2000, seed=0))
    emp = build_empirical_mdp(counts, m.mu, 3)
    visited = ~emp.unvisited
    np.testing.assert_array_equal(emp.mdp.P[visited], m.P[visited])


def test_frequency_arithmetic():
    n_sas = np.zeros((2, 1, 2))
    n_sas[0, 0] = [3, 1]
    n_sas[1, 0] = [0, 2]
    counts = DatasetCounts(n_sa=n_sas.sum(2), n_sas=n_sas, reward_sum=np.array([[1.0], [0.0]]), n=6)
    emp = build_empirical_mdp(counts, [1.0, 0.0], 2)
    np.testing.assert_array_equal(emp.mdp.P[0, 0], [0.75, 0.25])
    assert emp.mdp.r[0, 0] == 0.25


def test_unvisited_pairs_fall_back_to_zero_self_loop():
    n_sas = np.zeros((2, 2, 2))
    n_sas[0, 0, 1] = 4
    counts = DatasetCounts(n_sa=n_sas.sum(2), n_sas=n_sas, reward_sum=np.zeros((2, 2)), n=4)
    emp = build_empirical_mdp(counts, [1.0, 0.0], 2)
    assert emp.unvisited.sum() == 3
    np.testing.assert_array_equal(emp.mdp.P[1, 1], [0, 1])
    np.testing.assert_array_equal(emp.mdp.P[0, 1], [1, 0])
    assert emp.mdp.r[emp.unvisited].max() == 0
    est = ope_plugin(emp, Policy.uniform(2, 2, 2))
    assert any("(s=0, a=1)" in w for w in est.warnings)
    assert est.min_visit == 0


def test_empirical_model_converges(seed7):
    counts = count_statistics(sample_dataset(seed7, Policy.uniform(4, 3, 2), K=100_000, seed=3))
    emp = build_empirical_mdp(counts, seed7.mu, 4)
    assert np.abs(emp.mdp.P - seed7.P).sum(2).max() < 0.05


def test_exact_data_reproduces_truth(seed7):
    pi = Policy.uniform(4, 3, 2)
    emp = exact_empirical_mdp(seed7, pi)
    assert ope_plugin(emp, pi).value == evaluate_policy(seed7, pi).value
    pi_hat, _ = opo_plan(emp)
    assert abs(suboptimality_gap(seed7, pi_hat)) <= 1e-10
    # the rounding-level variant built straight from counts
    emp2 = build_empirical_mdp(exact_counts(seed7, pi), seed7.mu, 4)
    assert abs(ope_plugin(emp2, pi).value - evaluate_policy(seed7, pi).value) <= 1e-10


def test_one_step_bandit_estimate():
    counts = DatasetCounts(n_sa=np.array([[4]]), n_sas=np.full((1, 1, 1), 4.0),
                           reward_sum=np.array([[2.0]]), n=4)
    emp = build_empirical_mdp(counts, [1.0], 1)
    assert ope_plugin(emp, Policy.uniform(1, 1, 1)).value == 0.5


def test_primal_dual_agreement(seed7):
    for seed in range(20):
        counts = count_statistics(sample_dataset(seed7, Policy.uniform(4, 3, 2), K=30, seed=seed))
        est = ope_plugin(build_empirical_mdp(counts, seed7.mu, 4), Policy.random(4, 3, 2, seed=seed))
        assert abs(est.value - est.dual_value) <= 1e-10


def test_error_shrinks_with_sqrt_k(seed7):
    pi = Policy.uniform(4, 3, 2)
    v = evaluate_policy(seed7, pi).value
    med = []
    for i, K in enumerate((250, 1000, 4000)):
        errs = []
        for rep in range(200):
            ds = sample_dataset(seed7, pi, K=K, seed=derive_seed(11, i, rep))
            est = ope_plugin(build_empirical_mdp(count_statistics(ds), seed7.mu, 4), pi)
            errs.append(abs(est.value - v))
        med.append(np.median(errs))
    ratios = np.array(med[1:]) / np.array(med[:-1])
    # halving per 4x more data, within 25%
    assert np.all(np.abs(ratios - 0.5) <= 0.125), ratios


@pytest.mark.parametrize("seed", range(8))
def test_planner_matches_exhaustive_search(seed):
    m = random_mdp(2, 2, 2, seed=seed)
    counts = count_statistics(sample_dataset(m, Policy.uniform(2, 2, 2), K=20, seed=seed))
    emp = build_empirical_mdp(counts, m.mu, 2)
    pi_hat, v_hat = opo_plan(emp)
    assert pi_hat.is_deterministic()
    best = max(v for _, v in oracles.all_deterministic_values(emp.mdp.P, emp.mdp.r, emp.mdp.mu, 2))
    assert abs(v_hat - best) <= 1e-12


def test_planner_avoids_chain_arm_at_p1():
    H, n = 16, 400
    p1, _ = hard_pair(H, n)
    truth = opo_hard_instance(H, p1, lower_bound_c0(1.0, H), n)
    pi_hat, _ = opo_plan(exact_empirical_mdp(truth, Policy.uniform(H, 4, 2)))
    assert pi_hat.actions()[0, 0] != 0


def test_gap_cases(seed7):
    pi_star, _ = optimal_policy(seed7)
    assert suboptimality_gap(seed7, pi_star) == 0.0
    for k in range(20):
        g = suboptimality_gap(seed7, Policy.random(4, 3, 2, seed=k))
        assert 0 <= g <= 1


def test_gap_shrinks_with_data(seed7):
    gaps = {}
    for i, K in enumerate((250, 4000)):
        out = []
        for rep in range(200):
            ds = sample_dataset(seed7, Policy.uniform(4, 3, 2), K=K, seed=derive_seed(5, i, rep))
            pi_hat, _ = opo_plan(build_empirical_mdp(count_statistics(ds), seed7.mu, 4))
            g = suboptimality_gap(seed7, pi_hat)
            assert g >= -1e-10
            out.append(g)
        gaps[K] = np.median(out)
    assert gaps[4000] <= gaps[250]
