"""Value functions for knowledge-seeking and reward-seeking agents."""

from uailab.values.discount import DiscountSchedule, effective_horizon, effective_horizon_scan
from uailab.values.oracle import brute_force_oracle
from uailab.values.planning import (
    PlanResult,
    Planner,
    ValueKind,
    entropy_value,
    eps_optimal_action,
    info_value,
    optimal_value,
    policy_value,
    reward_value,
)

__all__ = [
    "DiscountSchedule",
    "PlanResult",
    "Planner",
    "ValueKind",
    "brute_force_oracle",
    "effective_horizon",
    "effective_horizon_scan",
    "entropy_value",
    "eps_optimal_action",
    "info_value",
    "optimal_value",
    "policy_value",
    "reward_value",
]
