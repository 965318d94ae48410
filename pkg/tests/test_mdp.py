import json

import numpy as np
import pytest

from offline_plugin.hard_instances import (
    bounded_reward_random_instance,
    hard_pair,
    lower_bound_c0,
    opo_hard_instance,
)
from offline_plugin.mdp import (
    MDPError,
    OracleTooLarge,
    Policy,
    RewardModel,
    TabularMDP,
    check_mdp_arrays,
    deterministic_chain,
    dual_policy_value,
    enumerate_deterministic_policies,
    enumerate_policy_value,
    evaluate_policy,
    occupancy_measures,
    optimal_policy,
    random_mdp,
    verify_bounded_total_reward,
)

from . import oracles


def bandit(r=0.5):
    return TabularMDP(P=np.ones((1, 1, 1)), r=[[r]], mu=[1.0], H=1)


# --- evaluate_policy --------------------------------------------------------


def test_one_step_bandit_value():
    m = bandit()
    assert evaluate_policy(m, Policy.uniform(1, 1, 1)).value == 0.5


def test_zero_reward_gives_zero_values(seed7):
    m = seed7.replace(r=np.zeros((3, 2)))
    sol = evaluate_policy(m, Policy.uniform(4, 3, 2))
    assert sol.value == 0.0
    assert not sol.V.any()


def test_seed7_matches_enumeration_and_path_oracle(seed7):
    pi = Policy.uniform(4, 3, 2)
    v = evaluate_policy(seed7, pi).value
    assert abs(v - enumerate_policy_value(seed7, pi)) <= 1e-12
    assert abs(v - oracles.trajectory_value(seed7.P, seed7.r, seed7.mu, pi.per_step, 4)) <= 1e-12


def test_value_solution_structure(seed7):
    pi = Policy.random(4, 3, 2, seed=3)
    sol = evaluate_policy(seed7, pi)
    assert sol.V.shape == (5, 3) and sol.Q.shape == (4, 3, 2)
    assert not sol.V[4].any()
    np.testing.assert_allclose(sol.V[:4], np.einsum("hsa,hsa->hs", pi.per_step, sol.Q), atol=1e-15)
    assert sol.value == pytest.approx(seed7.mu @ sol.V[0], abs=1e-15)


def test_dimension_mismatch_names_axis(seed7):
    with pytest.raises(MDPError) as exc:
        evaluate_policy(seed7, Policy.uniform(4, 2, 2))
    assert exc.value.check == "policy.shape" and exc.value.index == "S"
    with pytest.raises(MDPError) as exc:
        evaluate_policy(seed7, Policy.uniform(3, 3, 2))
    assert exc.value.index == "H"


# --- occupancy --------------------------------------------------------------


def test_chain_occupancy_is_point_mass():
    m = deterministic_chain(5, 4)
    occ = occupancy_measures(m, Policy.uniform(4, 5, 1))
    np.testing.assert_array_equal(occ.xi_state, np.eye(5)[:4])


def test_horizon_one_occupancy_is_mu(seed7):
    m = seed7.replace(H=1)
    occ = occupancy_measures(m, Policy.uniform(1, 3, 2))
    np.testing.assert_array_equal(occ.xi_state[0], m.mu)


def test_occupancy_recursions(seed7):
    pi = Policy.random(4, 3, 2, seed=1)
    occ = occupancy_measures(seed7, pi)
    np.testing.assert_allclose(occ.xi_state.sum(1), 1, atol=1e-10)
    np.testing.assert_allclose(occ.xi_state_action.sum((1, 2)), 1, atol=1e-10)
    np.testing.assert_allclose(occ.xi_state_action, occ.xi_state[:, :, None] * pi.per_step, atol=1e-15)
    for h in range(3):
        nxt = np.einsum("sa,sat->t", occ.xi_state_action[h], seed7.P)
        np.testing.assert_allclose(occ.xi_state[h + 1], nxt, atol=1e-15)


def test_occupancy_matches_simulation(seed7):
    pi = Policy.uniform(4, 3, 2)
    occ = occupancy_measures(seed7, pi).xi_state_action
    n = 100_000
    freq = oracles.simulate_visits(seed7.P, seed7.mu, pi.per_step, 4, n, np.random.default_rng(99))
    sigma = np.sqrt(occ * (1 - occ) / n)
    assert np.all(np.abs(freq - occ) <= 3 * sigma + 1e-12)


# --- dual value -------------------------------------------------------------


def test_dual_value_cases(seed7):
    m0 = seed7.replace(r=np.zeros((3, 2)))
    pi = Policy.uniform(4, 3, 2)
    assert dual_policy_value(m0, occupancy_measures(m0, pi)) == 0.0
    b = bandit()
    assert dual_policy_value(b, occupancy_measures(b, Policy.uniform(1, 1, 1))) == 0.5
    primal = evaluate_policy(seed7, pi).value
    assert abs(dual_policy_value(seed7, occupancy_measures(seed7, pi)) - primal) <= 1e-10


def test_dual_value_shape_check(seed7):
    occ = occupancy_measures(seed7.replace(H=3), Policy.uniform(3, 3, 2))
    with pytest.raises(MDPError):
        dual_policy_value(seed7, occ)


# --- optimal policy -----------------------------------------------------------


def test_single_action_optimal_is_unique_policy():
    m = random_mdp(3, 1, 3, seed=2)
    pi, sol = optimal_policy(m)
    assert np.all(pi.per_step == 1.0)
    assert sol.value == evaluate_policy(m, Policy.uniform(3, 3, 1)).value


@pytest.mark.parametrize("seed", range(5))
def test_exhaustive_small_instances(seed):
    m = random_mdp(2, 2, 2, seed=seed)
    pi, sol = optimal_policy(m)
    values = [v for _, v in oracles.all_deterministic_values(m.P, m.r, m.mu, 2)]
    assert len(values) == 16
    assert abs(sol.value - max(values)) <= 1e-12
    assert pi.is_deterministic()


def test_optimal_dominates_random_policies_per_state(seed7):
    _, best = optimal_policy(seed7)
    for k in range(100):
        sol = evaluate_policy(seed7, Policy.random(4, 3, 2, seed=k))
        assert np.all(best.V >= sol.V - 1e-12)


def test_ties_go_to_lowest_action():
    m = TabularMDP(P=np.ones((1, 3, 1)), r=[[0.5, 0.5, 0.2]], mu=[1.0], H=2)
    pi, _ = optimal_policy(m)
    assert np.all(pi.actions() == 0)


def test_hard_instance_p2_prefers_chain_arm():
    H, n = 16, 400
    _, p2 = hard_pair(H, n)
    pi, _ = optimal_policy(opo_hard_instance(H, p2, lower_bound_c0(1.0, H), n))
    assert pi.actions()[0, 0] == 0


# --- enumeration oracle -------------------------------------------------------


def test_enumeration_basic_cases():
    assert enumerate_policy_value(bandit(), Policy.uniform(1, 1, 1)) == 0.5
    m = deterministic_chain(4, 4)
    assert enumerate_policy_value(m, Policy.uniform(4, 4, 1)) == 1.0


def test_enumeration_cap():
    m = random_mdp(4, 3, 8, seed=0)
    with pytest.raises(OracleTooLarge, match="too large for oracle"):
        enumerate_policy_value(m, Policy.uniform(8, 4, 3))


def test_deterministic_policy_enumeration_count():
    assert sum(1 for _ in enumerate_deterministic_policies(2, 2, 2)) == 16


# --- bounded total reward -----------------------------------------------------


def test_uniform_reward_instance_is_bounded():
    m = bounded_reward_random_instance(3, 2, 5, seed=1)
    assert m.r.max() <= 1 / 5
    assert verify_bounded_total_reward(m).holds


def test_two_rewarded_states_in_sequence_violate():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    m = TabularMDP(P=P, r=[[0.6], [0.6]], mu=[1.0, 0.0], H=2, reward_model=RewardModel("deterministic"))
    for method in ("dp", "enumerate"):
        chk = verify_bounded_total_reward(m, method=method)
        assert not chk.holds
        assert chk.max_total_reward == pytest.approx(1.2)
        assert chk.witness == [(0, 0), (1, 0)]


@pytest.mark.parametrize("seed", range(4))
def test_terminal_instances_bounded_by_enumeration(seed):
    m = bounded_reward_random_instance(4, 2, 4, seed=seed, style="terminal")
    dp = verify_bounded_total_reward(m, method="dp")
    en = verify_bounded_total_reward(m, method="enumerate")
    assert dp.holds and en.holds
    assert dp.max_total_reward == pytest.approx(en.max_total_reward, abs=1e-15)


def test_enumeration_unverifiable_when_too_large():
    m = bounded_reward_random_instance(5, 3, 8, seed=0)
    with pytest.raises(OracleTooLarge, match="unverifiable"):
        verify_bounded_total_reward(m, method="enumerate")


def test_bernoulli_upper_bound_uses_scale():
    # mean 0.3 but Bernoulli(0.3) can pay 1 on each of two steps
    P = np.ones((1, 1, 1))
    m = TabularMDP(P=P, r=[[0.3]], mu=[1.0], H=2)
    assert not verify_bounded_total_reward(m).holds


# --- validation and serialization ---------------------------------------------


def test_invalid_arrays_are_named():
    P = np.full((2, 1, 2), 0.5)
    P[1, 0] = [0.7, 0.4]
    res = {c.check: c for c in check_mdp_arrays(P, np.zeros((2, 1)), [0.5, 0.5])}
    assert not res["transition.rows_sum_to_one"].ok
    assert tuple(res["transition.rows_sum_to_one"].index) == (1, 0)
    with pytest.raises(MDPError) as exc:
        TabularMDP(P=P, r=np.zeros((2, 1)), mu=[0.5, 0.5], H=2)
    assert exc.value.check == "transition.rows_sum_to_one"
    with pytest.raises(MDPError, match="initial_dist"):
        TabularMDP(P=np.full((2, 1, 2), 0.5), r=np.zeros((2, 1)), mu=[0.2, 0.2], H=2)
    with pytest.raises(MDPError, match="mean_reward"):
        TabularMDP(P=np.full((2, 1, 2), 0.5), r=[[1.5], [0]], mu=[0.5, 0.5], H=2)


def test_policy_validation():
    with pytest.raises(MDPError):
        Policy(np.full((2, 2, 2), 0.6))
    with pytest.raises(MDPError):
        Policy(np.array([[[1.5, -0.5]]]))


def test_mdp_is_read_only(seed7):
    with pytest.raises(ValueError):
        seed7.P[0, 0, 0] = 1.0


def test_json_round_trip(seed7):
    blob = json.dumps(seed7.to_json())
    back = TabularMDP.from_json(json.loads(blob))
    np.testing.assert_array_equal(back.P, seed7.P)
    assert back.digest() == seed7.digest()
    pi = Policy.random(4, 3, 2, seed=5)
    assert Policy.from_json(json.loads(json.dumps(pi.to_json()))).digest() == pi.digest()
    assert seed7.to_json()["schema"] == "tabular-mdp/1"
    with pytest.raises(MDPError):
        TabularMDP.from_json({**seed7.to_json(), "schema": "tabular-mdp/0"})
