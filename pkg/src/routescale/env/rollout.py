from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..instances.types import ProblemInstance
from .batch import BatchEnv, InstanceBatch, trim_tour


@dataclass
class Solution:
    tour: list
    objective: float
    feasible: bool


@dataclass
class RolloutResult:
    actions: np.ndarray  # (B, P, T) after the initial depot
    cost: np.ndarray  # (B, P)
    valid: np.ndarray  # (B, P): False where the forced start was infeasible
    logp: Optional[object] = None  # (B, P), framework tensor when produced by a policy

    def tour(self, b: int, p: int, open_route: bool) -> list:
        return trim_tour(self.actions[b, p], open_route)


Chooser = Callable[[BatchEnv, np.ndarray], np.ndarray]


def start_nodes(batch: InstanceBatch, m: int) -> np.ndarray:
    """Forced second actions 1..m for every instance, shape (B, m)."""
    if not 1 <= m <= batch.n_nodes - 1:
        raise ValueError(f"start count {m} outside [1, {batch.n_nodes - 1}]")
    return np.broadcast_to(np.arange(1, m + 1), (batch.size, m)).copy()


def force_starts(env: BatchEnv, starts: np.ndarray) -> np.ndarray:
    """Take the forced first move; infeasible starts fall back to the first feasible node."""
    mask = env.mask()
    valid = np.take_along_axis(mask, starts[..., None], -1)[..., 0]
    fallback = mask[..., 1:].argmax(-1) + 1
    env.step(np.where(valid, starts, fallback), mask)
    return valid


def run_rollouts(batch: InstanceBatch, starts: Optional[np.ndarray], choose: Chooser,
                 n_traj: int | None = None, check: bool = True) -> RolloutResult:
    P = starts.shape[1] if starts is not None else (n_traj or 1)
    env = BatchEnv(batch, P)
    valid = force_starts(env, starts) if starts is not None else np.ones((batch.size, P), bool)
    while not env.all_done:
        mask = env.mask()
        env.step(choose(env, mask), mask if check else None)
    return RolloutResult(env.action_array(), env.cost.copy(), valid)


class NearestNeighbourPolicy:
    """Greedy baseline: nearest feasible customer, depot when none is reachable."""

    def rollout(self, batch, starts, greedy=True, generator=None):
        def choose(env, mask):
            d = batch.dist[np.arange(batch.size)[:, None], env.cur]
            d = np.where(mask, d, np.inf)
            d[..., 0] = np.where(mask[..., 0] & ~mask[..., 1:].any(-1), 0.0, np.inf)
            return d.argmin(-1)

        return run_rollouts(batch, starts, choose)


class RandomPolicy:
    """Uniform over feasible actions (greedy flag ignored)."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def rollout(self, batch, starts, greedy=True, generator=None):
        def choose(env, mask):
            noise = self.rng.random(mask.shape)
            return np.where(mask, noise, -1.0).argmax(-1)

        return run_rollouts(batch, starts, choose)


@dataclass
class MultiStartResult:
    best: Solution
    objectives: np.ndarray  # one entry per start; inf for skipped starts
    trajectories: int


def multi_start_rollouts(instance: ProblemInstance, policy, m: int, greedy: bool = True,
                         generator=None) -> MultiStartResult:
    batch = InstanceBatch.from_instances([instance])
    starts = start_nodes(batch, m)
    res = policy.rollout(batch, starts, greedy=greedy, generator=generator)
    obj = np.where(res.valid[0], res.cost[0], np.inf)
    k = int(np.argmin(obj))  # first minimum => lowest start index wins ties
    tour = res.tour(0, k, instance.variant.open_route)
    best = Solution(tour, float(obj[k]), bool(np.isfinite(obj[k])))
    return MultiStartResult(best, obj, int(res.valid[0].sum()))
