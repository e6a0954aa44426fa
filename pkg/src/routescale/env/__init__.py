from .augment import augment_coords_x8, augment_x8
from .batch import BatchEnv, InfeasibleStateError, InstanceBatch, trim_tour
from .core import (
    InfeasibleActionError,
    RouteState,
    feasible_actions,
    initial_state,
    reset,
    solution_cost,
    step,
    validate_solution,
)
from .rollout import (
    MultiStartResult,
    NearestNeighbourPolicy,
    RandomPolicy,
    RolloutResult,
    Solution,
    multi_start_rollouts,
    run_rollouts,
    start_nodes,
)
