import os
import subprocess
import sys

import numpy as np
import pytest

from routescale.env.augment import augment_x8
from routescale.env.batch import BatchEnv, InstanceBatch
from routescale.env.core import (
    InfeasibleActionError,
    feasible_actions,
    initial_state,
    reset,
    solution_cost,
    step,
    validate_solution,
)
from routescale.env.kernels import mask_numba, mask_numpy, step_numba, step_numpy
from routescale.env.rollout import NearestNeighbourPolicy, RandomPolicy, multi_start_rollouts, run_rollouts
from routescale.instances.types import HORIZON, ProblemInstance, VariantFlags, VARIANT_NAMES

from conftest import make, random_instances
from oracles import brute_force_mask, tour_cost, tour_feasible


def hand_instance(coords, demands, variant="CVRP", pickup=None, windows=None, service=None, rho=None,
                  capacity=10):
    coords = np.asarray(coords, dtype=float)
    m = len(coords) - 1
    flags = VariantFlags.from_name(variant)
    return ProblemInstance(
        scale=m, coords=coords, demands=np.r_[0.0, np.asarray(demands, float)], raw_capacity=capacity,
        backhaul_mask=np.zeros(m, bool) if pickup is None else np.asarray(pickup, bool),
        service_times=np.zeros(m + 1) if service is None else np.asarray(service, float),
        variant=flags, time_windows=None if windows is None else np.asarray(windows, float),
        distance_limit=rho)


def random_walk(inst, rng):
    """Tour prefixes visited by a uniformly random feasible walk."""
    state = initial_state(inst)
    prefixes = []
    while not state.done:
        prefixes.append(list(state.partial_tour))
        mask = feasible_actions(state, inst)
        state = step(state, int(rng.choice(np.flatnonzero(mask))), inst)
    return prefixes, list(state.partial_tour)


def test_fresh_cvrp_state():
    mask = feasible_actions(initial_state(make(6)), make(6))
    assert not mask[0] and mask[1:].all()


def test_pickups_masked_while_linehaul_open():
    inst = make(30, "VRPB", seed=4)
    assert inst.backhaul_mask.any() and (~inst.backhaul_mask).any()
    mask = feasible_actions(initial_state(inst), inst)
    assert not mask[1:][inst.backhaul_mask].any()


def test_mask_matches_oracle_on_random_walks():
    rng = np.random.default_rng(0)
    for inst in random_instances(160, max_scale=8, seed=1):
        prefixes, tour = random_walk(inst, rng)
        for prefix in prefixes:
            state = initial_state(inst)
            for a in prefix[1:]:
                state = step(state, a, inst)
            assert np.array_equal(feasible_actions(state, inst), brute_force_mask(inst, prefix)), prefix
        assert tour_feasible(inst, tour)


def kernel_state(seed, B=6, P=5, M=12):
    rng = np.random.default_rng(seed)
    insts = [make(M, VARIANT_NAMES[(seed + b) % 16], seed=seed * 100 + b) for b in range(B)]
    batch = InstanceBatch.from_instances(insts)
    env = BatchEnv(batch, P)
    for _ in range(int(rng.integers(0, M))):
        mask = env.mask()
        env.step(np.where(mask, rng.random(mask.shape), -1).argmax(-1), mask)
    return env


@pytest.mark.parametrize("seed", range(12))
def test_numba_and_numpy_kernels_agree(seed):
    env = kernel_state(seed)
    b = env.batch
    args = (env.cur, env.visited, env.load_l, env.load_b, env.clock, env.used, env.lh_left, env.done,
            b.dist, b.demand, b.pickup, b.tl, b.tr, b.ts, b.horizon, b.rho, b.open_route)
    mask = mask_numpy(*args)
    assert np.array_equal(mask, mask_numba(*args))
    actions = np.where(mask, np.random.default_rng(seed).random(mask.shape), -1).argmax(-1)
    states = []
    for fn in (step_numpy, step_numba):
        s = [a.copy() for a in (env.cur, env.visited, env.load_l, env.load_b, env.clock, env.used,
                                env.lh_left, env.n_left, env.done, env.cost)]
        fn(actions, *s, b.dist, b.demand, b.pickup, b.tl, b.ts, b.open_route)
        states.append(s)
    for x, y in zip(*states):
        assert np.array_equal(x, y)


def test_numba_flag_switches_backend():
    code = "from routescale._accel import backend; from routescale.env import kernels as k; " \
           "print(backend(), k.feasibility_mask is k.mask_numpy)"
    env = dict(os.environ, ROUTESCALE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_waiting_then_service():
    inst = hand_instance([[0, 0], [0.3, 0.4]], [0.1], "VRPTW",
                         windows=[[0, HORIZON], [1.0, 1.2]], service=[0, 0.15])
    s = step(initial_state(inst), 1, inst)
    assert s.clock == pytest.approx(1.15, abs=1e-15)


def test_capacity_decrement_and_depot_reset():
    inst = hand_instance([[0, 0], [0.3, 0.4], [0.1, 0.1]], [0.3, 0.2], "VRPL", rho=2.5)
    s = step(initial_state(inst), 1, inst)
    assert s.remaining_linehaul == pytest.approx(0.7, abs=1e-15)
    assert s.remaining_route_length == pytest.approx(2.0, abs=1e-15)
    s = step(s, 0, inst)
    assert (s.remaining_linehaul, s.remaining_backhaul, s.clock) == (1.0, 1.0, 0.0)
    assert s.remaining_route_length == 2.5


def test_forced_start():
    inst = make(5)
    assert reset(inst).partial_tour == (0,)
    assert reset(inst, 3).partial_tour == (0, 3)


def test_forced_start_outside_window_raises():
    # node 1 is 0.5 away but its window closes at 0.3
    inst = hand_instance([[0, 0], [0.3, 0.4], [0.1, 0]], [0.1, 0.1], "VRPTW",
                         windows=[[0, HORIZON], [0.1, 0.3], [0.1, 0.3]], service=[0, 0.15, 0.15])
    with pytest.raises(InfeasibleActionError):
        reset(inst, 1)


def test_capacity_conservation_along_route():
    inst = make(40, "CVRP", seed=9)
    state = initial_state(inst)
    served = 0.0
    rng = np.random.default_rng(2)
    while not state.done:
        a = int(rng.choice(np.flatnonzero(feasible_actions(state, inst))))
        state = step(state, a, inst)
        served = 0.0 if a == 0 else served + inst.demands[a]
        assert abs((1.0 - served) - state.remaining_linehaul) <= 1e-12
        assert 0.0 <= state.remaining_linehaul <= 1.0


def test_solution_cost_examples():
    inst = hand_instance([[0, 0], [0.3, 0.4]], [0.1])
    assert solution_cost([0, 1, 0], inst) == pytest.approx(1.0)
    open_inst = hand_instance([[0, 0], [0.3, 0.4]], [0.1], "OVRP")
    assert solution_cost([0, 1, 0], open_inst) == pytest.approx(0.5)


@pytest.mark.parametrize("variant", VARIANT_NAMES)
def test_cost_matches_second_path(variant):
    inst = make(20, variant, seed=17)
    _, tour = random_walk(inst, np.random.default_rng(5))
    assert abs(solution_cost(tour, inst) - tour_cost(inst, tour)) <= 1e-9


def test_open_cost_not_above_closed():
    closed = make(15, "CVRP", seed=2)
    opened = ProblemInstance(**{**closed.__dict__, "variant": VariantFlags(open_route=True), "_dist": None})
    _, tour = random_walk(closed, np.random.default_rng(1))
    assert solution_cost(tour, opened) <= solution_cost(tour, closed)


def test_validate_rejects_duplicate_and_accepts_rollouts():
    inst = make(6, "VRPBLTW", seed=5)
    for p in range(6):
        _, tour = random_walk(inst, np.random.default_rng(p))
        assert validate_solution(tour, inst)[0]
    assert not validate_solution([0, 1, 1, 2, 3, 4, 5, 6, 0], inst)[0]
    assert not validate_solution([0, 1, 2, 0], inst)[0]


def test_validate_rejects_tight_distance_limit():
    # out-and-backs cost at most 2 * 0.539 < rho = 1.1; 0 -> 1 -> 2 -> 0 costs 0.5 + 0.2 + 0.539
    inst = hand_instance([[0, 0], [0.5, 0], [0.5, 0.2], [0, 0.5]], [0.1] * 3, "VRPL", rho=1.1)
    assert validate_solution([0, 1, 0, 2, 0, 3, 0], inst)[0]
    assert not validate_solution([0, 1, 2, 0, 3, 0], inst)[0]


def test_rollout_tours_validate():
    insts = [make(10, v, seed=i) for i, v in enumerate(VARIANT_NAMES)]
    for inst in insts:
        batch = InstanceBatch.from_instances([inst])
        res = run_rollouts(batch, None, lambda env, mask: np.where(mask, 1.0, -1).argmax(-1), n_traj=1)
        tour = res.tour(0, 0, inst.variant.open_route)
        ok, obj = validate_solution(tour, inst)
        assert ok and obj == pytest.approx(res.cost[0, 0], abs=1e-12)


def test_augment_identity_first_and_isometry():
    inst = make(25, "VRPLTW", seed=6)
    views = augment_x8(inst)
    assert len(views) == 8 and views[0] is inst
    d = inst.distance_matrix()
    _, tour = random_walk(inst, np.random.default_rng(0))
    for v in views:
        assert np.abs(v.distance_matrix() - d).max() <= 1e-12
        assert v.coords.min() >= 0 and v.coords.max() <= 1
        assert abs(solution_cost(tour, v) - solution_cost(tour, inst)) <= 1e-9
        assert np.array_equal(v.demands, inst.demands) and v.distance_limit == inst.distance_limit


def test_multi_start_accounting_and_monotone():
    inst = make(12, "CVRP", seed=4)
    nn = NearestNeighbourPolicy()
    full = multi_start_rollouts(inst, nn, 12)
    assert full.trajectories == 12 and len(full.objectives) == 12
    one = multi_start_rollouts(inst, nn, 1)
    assert one.trajectories == 1
    prev = np.inf
    for m in range(1, 13):
        best = multi_start_rollouts(inst, nn, m).best.objective
        assert best <= prev
        prev = best
    assert validate_solution(full.best.tour, inst) == (True, pytest.approx(full.best.objective))


def test_multi_start_ties_pick_lowest_start():
    # symmetric instance: starts 1 and 2 mirror each other
    inst = hand_instance([[0.5, 0.5], [0.2, 0.5], [0.8, 0.5]], [0.1, 0.1])
    res = multi_start_rollouts(inst, NearestNeighbourPolicy(), 2)
    assert res.objectives[0] == res.objectives[1]
    assert res.best.tour[1] == 1


def test_infeasible_starts_skipped():
    # a pickup cannot open the tour while a delivery is outstanding
    inst = hand_instance([[0, 0], [0.3, 0.4], [0.1, 0]], [0.1, 0.1], "VRPB", pickup=[True, False])
    res = multi_start_rollouts(inst, RandomPolicy(0), 2)
    assert res.trajectories == 1 and np.isinf(res.objectives[0])
    assert res.best.tour == [0, 2, 1, 0]
