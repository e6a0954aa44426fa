"""Batched environment: B instances of equal scale, P trajectories each."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..instances.types import HORIZON, ProblemInstance, euclidean_distances
from .kernels import apply_step, feasibility_mask


class InfeasibleStateError(RuntimeError):
    """Raised when an unfinished trajectory has no feasible action."""


@dataclass
class InstanceBatch:
    instances: list
    coords: np.ndarray  # (B, N, 2)
    dist: np.ndarray  # (B, N, N)
    demand: np.ndarray  # (B, N)
    pickup: np.ndarray  # (B, N)
    tl: np.ndarray
    tr: np.ndarray
    ts: np.ndarray
    horizon: np.ndarray  # (B,)
    rho: np.ndarray  # (B,)
    open_route: np.ndarray  # (B,)
    has_tw: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[1]

    @classmethod
    def from_instances(cls, instances: Sequence[ProblemInstance]) -> "InstanceBatch":
        instances = list(instances)
        if not instances:
            raise ValueError("empty batch")
        n = instances[0].n_nodes
        if any(inst.n_nodes != n for inst in instances):
            raise ValueError("all instances in a batch must have the same scale")
        B = len(instances)
        coords = np.stack([inst.coords for inst in instances]).astype(np.float64)
        demand = np.stack([inst.demands for inst in instances]).astype(np.float64)
        pickup = np.stack([inst.pickup for inst in instances])
        tl = np.zeros((B, n))
        tr = np.full((B, n), np.inf)
        ts = np.zeros((B, n))
        horizon = np.full(B, np.inf)
        rho = np.full(B, np.inf)
        has_tw = np.zeros(B, dtype=bool)
        for b, inst in enumerate(instances):
            if inst.variant.time_window:
                tl[b], tr[b] = inst.time_windows[:, 0], inst.time_windows[:, 1]
                ts[b] = inst.service_times
                horizon[b] = inst.horizon
                has_tw[b] = True
            if inst.variant.duration_limit:
                rho[b] = inst.distance_limit
        open_route = np.array([inst.variant.open_route for inst in instances])
        return cls(instances, coords, euclidean_distances(coords), demand, pickup, tl, tr, ts,
                   horizon, rho, open_route, has_tw)

    def node_features(self) -> np.ndarray:
        """(B, N, 6): x, y, signed demand (pickups negative), window start/end, service time."""
        B, N = self.demand.shape
        feats = np.zeros((B, N, 6))
        feats[..., :2] = self.coords
        feats[..., 2] = np.where(self.pickup, -self.demand, self.demand)
        tw = self.has_tw[:, None]
        feats[..., 3] = np.where(tw, self.tl, 0.0)
        feats[..., 4] = np.where(tw, self.tr, 0.0)
        feats[..., 5] = np.where(tw, self.ts, 0.0)
        return feats

    def with_coords(self, coords: np.ndarray) -> "InstanceBatch":
        insts = [inst.with_coords(c) for inst, c in zip(self.instances, coords)]
        return InstanceBatch(insts, coords, euclidean_distances(coords), self.demand, self.pickup,
                             self.tl, self.tr, self.ts, self.horizon, self.rho, self.open_route,
                             self.has_tw)


class BatchEnv:
    """Mutable rollout state for ``batch.size`` instances x ``n_traj`` trajectories."""

    def __init__(self, batch: InstanceBatch, n_traj: int):
        self.batch = batch
        B, N = batch.size, batch.n_nodes
        P = n_traj
        self.shape = (B, P)
        self.cur = np.zeros((B, P), dtype=np.int64)
        self.visited = np.zeros((B, P, N), dtype=bool)
        self.visited[..., 0] = True
        self.load_l = np.ones((B, P))
        self.load_b = np.ones((B, P))
        self.clock = np.zeros((B, P))
        self.used = np.zeros((B, P))
        n_line = (~batch.pickup[:, 1:]).sum(1)
        self.lh_left = np.repeat(n_line[:, None], P, 1).astype(np.int64)
        self.n_left = np.full((B, P), N - 1, dtype=np.int64)
        self.done = np.zeros((B, P), dtype=bool)
        self.cost = np.zeros((B, P))
        self.actions = []

    def mask(self) -> np.ndarray:
        b = self.batch
        m = feasibility_mask(self.cur, self.visited, self.load_l, self.load_b, self.clock,
                             self.used, self.lh_left, self.done, b.dist, b.demand, b.pickup,
                             b.tl, b.tr, b.ts, b.horizon, b.rho, b.open_route)
        stuck = ~m.any(-1)
        if stuck.any():
            bi, pi = np.argwhere(stuck)[0]
            raise InfeasibleStateError(f"no feasible action for batch item {bi}, trajectory {pi}: "
                                       f"{self.describe(bi, pi)}")
        return m

    def step(self, actions: np.ndarray, mask: np.ndarray | None = None) -> None:
        actions = np.asarray(actions, dtype=np.int64)
        if mask is not None:
            ok = np.take_along_axis(mask, actions[..., None], -1)[..., 0]
            if not ok.all():
                bi, pi = np.argwhere(~ok)[0]
                raise ValueError(f"infeasible action {actions[bi, pi]} for batch item {bi}, "
                                 f"trajectory {pi}: {self.describe(bi, pi)}")
        b = self.batch
        apply_step(actions, self.cur, self.visited, self.load_l, self.load_b, self.clock,
                   self.used, self.lh_left, self.n_left, self.done, self.cost, b.dist, b.demand,
                   b.pickup, b.tl, b.ts, b.open_route)
        self.actions.append(actions.copy())

    @property
    def all_done(self) -> bool:
        return bool(self.done.all())

    def context(self) -> np.ndarray:
        """(B, P, 5): remaining linehaul/backhaul capacity, clock, remaining length, open flag."""
        b = self.batch
        ctx = np.empty(self.shape + (5,))
        ctx[..., 0] = self.load_l
        ctx[..., 1] = self.load_b
        ctx[..., 2] = np.where(b.has_tw[:, None], self.clock, self.clock / HORIZON)
        finite = np.isfinite(b.rho)[:, None]
        ctx[..., 3] = np.where(finite, np.where(finite, b.rho[:, None], 0.0) - self.used, 1.0)
        ctx[..., 4] = b.open_route[:, None].astype(np.float64)
        return ctx

    def action_array(self) -> np.ndarray:
        if not self.actions:
            return np.zeros(self.shape + (0,), dtype=np.int64)
        return np.stack(self.actions, -1)

    def describe(self, b: int, p: int) -> str:
        tour = [0] + [int(a[b, p]) for a in self.actions]
        return (f"tour={tour} cur={self.cur[b, p]} load_l={self.load_l[b, p]:.6g} "
                f"load_b={self.load_b[b, p]:.6g} clock={self.clock[b, p]:.6g} "
                f"used={self.used[b, p]:.6g} linehaul_left={self.lh_left[b, p]} "
                f"unvisited={np.flatnonzero(~self.visited[b, p]).tolist()}")


def trim_tour(actions: Sequence[int], open_route: bool) -> list:
    """Depot-led tour from a padded action row."""
    tour = [0] + [int(a) for a in actions]
    while len(tour) > 1 and tour[-1] == 0:
        tour.pop()
    if not open_route:
        tour.append(0)
    return tour
