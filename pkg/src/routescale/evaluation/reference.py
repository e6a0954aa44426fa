"""Reference solutions: exact for tiny instances, insertion + local search otherwise."""
from __future__ import annotations

import numpy as np

from ..env.core import _single, solution_cost, validate_solution
from ..env.rollout import NearestNeighbourPolicy, Solution, start_nodes
from ..instances.types import ProblemInstance
from . import _solvers

MAX_EXACT_SCALE = 10
HEURISTIC_CONSTRUCTIONS = 10
HEURISTIC_KICKS = 30


def _arrays(instance: ProblemInstance):
    b = _single(instance)
    return (b.dist[0], b.demand[0], b.pickup[0], b.tl[0], b.tr[0], b.ts[0], float(b.horizon[0]),
            float(b.rho[0]), bool(b.open_route[0]))


def _solution(tour, instance) -> Solution:
    tour = [int(t) for t in tour]
    feasible, objective = validate_solution(tour, instance)
    return Solution(tour, objective, feasible)


def reference_exact(instance: ProblemInstance, max_scale: int = MAX_EXACT_SCALE) -> Solution:
    """Provably optimal solution by route enumeration and subset partitioning."""
    if instance.scale > max_scale:
        raise ValueError(f"exact reference limited to {max_scale} customers, got {instance.scale}")
    best, tour = _solvers.exact_solve(*_arrays(instance))
    if not np.isfinite(best):
        return Solution([0], float("inf"), False)
    return _solution(tour, instance)


def _improve(routes, lens, n_routes, args):
    costs = np.array([_solvers.route_cost(routes[r], lens[r], *args) for r in range(len(lens))])
    n_routes = _solvers.local_search(routes, lens, costs, n_routes, *args)
    return float(costs[:n_routes].sum()), routes, lens, n_routes


def reference_heuristic(instance: ProblemInstance, constructions: int = HEURISTIC_CONSTRUCTIONS,
                        kicks: int = HEURISTIC_KICKS) -> Solution:
    """Cheapest feasible insertion, then 2-opt, relocate and swap to a local optimum.

    Up to ``constructions`` nearest-neighbour tours (forced first customers
    1, 2, ...) are improved the same way and the cheapest local optimum is
    kept.  ``kicks`` rounds of perturbation (reinsert a few random customers,
    re-optimise, keep if cheaper) follow; the random stream is seeded from
    the instance, so the result is deterministic.
    """
    args = _arrays(instance)
    M = instance.scale
    starts = []
    routes, lens, _, n_routes = _solvers.greedy_insertion(*args)
    if n_routes >= 0:
        starts.append((routes, lens, n_routes))
    k = min(constructions, M)
    if k > 0:
        batch = _single(instance)
        res = NearestNeighbourPolicy().rollout(batch, start_nodes(batch, M)[:, :k])
        for p in range(k):
            if res.valid[0, p]:
                starts.append(_solvers.tour_to_routes(res.tour(0, p, False), M))
    best = None
    for routes, lens, n_routes in starts:
        cand = _improve(routes.copy(), lens.copy(), n_routes, args)
        if best is None or cand[0] < best[0] - 1e-12:
            best = cand
    if best is None:
        return Solution([0], float("inf"), False)
    rng = np.random.default_rng(np.random.SeedSequence(instance.seed, spawn_key=(11,)))
    for _ in range(kicks if M > 2 else 0):
        _, routes, lens, n_routes = best
        routes, lens = routes.copy(), lens.copy()
        victims = rng.choice(np.arange(1, M + 1), size=min(3, M), replace=False)
        n_routes = _solvers.kick(routes, lens, n_routes, victims, rng.random(victims.size), *args)
        cand = _improve(routes, lens, n_routes, args)
        if cand[0] < best[0] - 1e-12:
            best = cand
    _, routes, lens, n_routes = best
    tour = _solvers.routes_to_tour(routes, lens, n_routes, args[2], args[-1])
    return _solution(tour, instance)


def reference_objective(instance: ProblemInstance, method: str = "auto") -> float:
    if method == "auto":
        method = "exact" if instance.scale <= MAX_EXACT_SCALE else "heuristic"
    if method == "exact":
        return reference_exact(instance).objective
    if method == "heuristic":
        return reference_heuristic(instance).objective
    raise ValueError(f"unknown reference method {method!r}")


__all__ = ["reference_exact", "reference_heuristic", "reference_objective", "solution_cost"]
