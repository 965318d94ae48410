"""Plug-in offline evaluation and planning for episodic tabular and anchor-point linear MDPs."""

from .data import (
    Dataset,
    DatasetCounts,
    count_statistics,
    empirical_min_visit,
    read_dataset,
    sample_dataset,
    write_dataset,
)
from .hard_instances import bounded_reward_random_instance, reference_instance
from .mdp import (
    MDPError,
    OccupancyMeasures,
    Policy,
    RewardModel,
    TabularMDP,
    ValueSolution,
    dual_policy_value,
    enumerate_policy_value,
    evaluate_policy,
    occupancy_measures,
    optimal_policy,
    verify_bounded_total_reward,
)
from .plugin import EmpiricalMDP, build_empirical_mdp, ope_plugin, opo_plan, suboptimality_gap

__version__ = "0.1.0"
