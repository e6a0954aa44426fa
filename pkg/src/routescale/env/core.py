"""Single-trajectory API over the batched kernels.

``RouteState`` is an immutable value; ``step`` returns a new one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..instances.types import ProblemInstance
from .batch import BatchEnv, InfeasibleStateError, InstanceBatch


class InfeasibleActionError(ValueError):
    pass


@dataclass(frozen=True)
class RouteState:
    current_node: int
    visited: tuple  # per customer
    remaining_linehaul: float
    remaining_backhaul: float
    clock: float
    remaining_route_length: float  # inf without a duration limit
    open_flag: int
    partial_tour: tuple
    done: bool
    used_length: float = 0.0
    linehaul_left: int = 0
    cost: float = 0.0


def _single(instance: ProblemInstance) -> InstanceBatch:
    batch = instance.__dict__.get("_single_batch")
    if batch is None:
        batch = InstanceBatch.from_instances([instance])
        instance.__dict__["_single_batch"] = batch
    return batch


def _to_env(state: RouteState, instance: ProblemInstance) -> BatchEnv:
    env = BatchEnv(_single(instance), 1)
    env.cur[0, 0] = state.current_node
    env.visited[0, 0, 1:] = state.visited
    env.load_l[0, 0] = state.remaining_linehaul
    env.load_b[0, 0] = state.remaining_backhaul
    env.clock[0, 0] = state.clock
    env.used[0, 0] = state.used_length
    env.lh_left[0, 0] = state.linehaul_left
    env.n_left[0, 0] = instance.scale - sum(state.visited)
    env.done[0, 0] = state.done
    env.cost[0, 0] = state.cost
    return env


def _from_env(env: BatchEnv, instance: ProblemInstance, tour: tuple) -> RouteState:
    rho = instance.distance_limit
    used = float(env.used[0, 0])
    return RouteState(
        current_node=int(env.cur[0, 0]),
        visited=tuple(bool(v) for v in env.visited[0, 0, 1:]),
        remaining_linehaul=float(env.load_l[0, 0]),
        remaining_backhaul=float(env.load_b[0, 0]),
        clock=float(env.clock[0, 0]),
        remaining_route_length=(rho - used) if rho is not None else float("inf"),
        open_flag=int(instance.variant.open_route),
        partial_tour=tour,
        done=bool(env.done[0, 0]),
        used_length=used,
        linehaul_left=int(env.lh_left[0, 0]),
        cost=float(env.cost[0, 0]),
    )


def initial_state(instance: ProblemInstance) -> RouteState:
    return _from_env(BatchEnv(_single(instance), 1), instance, (0,))


def feasible_actions(state: RouteState, instance: ProblemInstance) -> np.ndarray:
    env = _to_env(state, instance)
    try:
        return env.mask()[0, 0]
    except InfeasibleStateError as exc:
        raise InfeasibleStateError(f"{exc}; state={state}") from None


def step(state: RouteState, action: int, instance: ProblemInstance) -> RouteState:
    mask = feasible_actions(state, instance)
    action = int(action)
    if not 0 <= action < instance.n_nodes or not mask[action]:
        raise InfeasibleActionError(f"action {action} infeasible from tour {list(state.partial_tour)}")
    if state.done:
        return state
    env = _to_env(state, instance)
    env.step(np.array([[action]]))
    return _from_env(env, instance, state.partial_tour + (action,))


def reset(instance: ProblemInstance, second_action: Optional[int] = None) -> RouteState:
    state = initial_state(instance)
    if second_action is None:
        return state
    if second_action == 0:
        raise InfeasibleActionError("forced start must be a customer")
    return step(state, second_action, instance)


def solution_cost(tour: Sequence[int], instance: ProblemInstance) -> float:
    """Sum of edge lengths; edges into the depot are free on open-route variants."""
    tour = np.asarray(tour, dtype=np.int64)
    if tour.size < 2:
        return 0.0
    d = instance.distance_matrix()[tour[:-1], tour[1:]]
    if instance.variant.open_route:
        d = np.where(tour[1:] == 0, 0.0, d)
    return float(d.sum())


def validate_solution(tour: Sequence[int], instance: ProblemInstance):
    """Replay ``tour`` from scratch; returns ``(feasible, objective)``."""
    tour = [int(t) for t in tour]
    objective = solution_cost(tour, instance) if tour else float("inf")
    if not tour or tour[0] != 0:
        return False, objective
    state = initial_state(instance)
    for a in tour[1:]:
        if state.done:
            if a != 0:
                return False, objective
            continue
        try:
            state = step(state, a, instance)
        except (InfeasibleActionError, InfeasibleStateError):
            return False, objective
    return state.done, objective
