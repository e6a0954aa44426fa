"""Time the numba and numpy paths of the environment kernels.

    python benchmarks/bench_kernels.py [--batch 64] [--scale 100] [--repeat 20]

Both implementations are imported directly, so one process times both
regardless of ROUTESCALE_DISABLE_NUMBA.  Outputs are compared before timing.
"""
import argparse
import time

import numpy as np

from routescale._accel import USE_NUMBA
from routescale.env.batch import BatchEnv, InstanceBatch
from routescale.env.kernels import mask_numba, mask_numpy, step_numba, step_numpy
from routescale.env.rollout import force_starts, start_nodes
from routescale.instances.generate import make_instance
from routescale.instances.types import ALL_VARIANTS, GeneratorConfig


def mid_rollout_env(batch_size, scale, seed=0):
    """A batch of mixed variants advanced a few nearest-neighbour steps."""
    variants = [v for v in ALL_VARIANTS]
    insts = [make_instance(GeneratorConfig(scale, variants[i % 16], seed=seed + i)) for i in range(batch_size)]
    batch = InstanceBatch.from_instances(insts)
    env = BatchEnv(batch, scale)
    force_starts(env, start_nodes(batch, scale))
    for _ in range(scale // 4):
        mask = env.mask()
        d = np.where(mask, batch.dist[np.arange(batch.size)[:, None], env.cur], np.inf)
        env.step(d.argmin(-1), mask)
    return env


def mask_args(env):
    b = env.batch
    return (env.cur, env.visited, env.load_l, env.load_b, env.clock, env.used, env.lh_left,
            env.done, b.dist, b.demand, b.pickup, b.tl, b.tr, b.ts, b.horizon, b.rho, b.open_route)


def step_args(env, actions):
    b = env.batch
    state = [a.copy() for a in (env.cur, env.visited, env.load_l, env.load_b, env.clock, env.used,
                                env.lh_left, env.n_left, env.done, env.cost)]
    return (actions, *state, b.dist, b.demand, b.pickup, b.tl, b.ts, b.open_route)


def best_of(fn, args_fn, repeat):
    times = []
    for _ in range(repeat):
        args = args_fn()
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--scale", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not USE_NUMBA:
        print("note: ROUTESCALE_DISABLE_NUMBA is set; the 'numba' column runs as plain Python")

    env = mid_rollout_env(args.batch, args.scale)
    margs = mask_args(env)
    ref = mask_numpy(*margs)
    assert np.array_equal(ref, mask_numba(*margs)), "mask kernels disagree"
    actions = np.where(ref[..., 1:].any(-1), ref[..., 1:].argmax(-1) + 1, 0)

    s_np, s_nb = step_args(env, actions), step_args(env, actions)
    step_numpy(*s_np)
    step_numba(*s_nb)
    assert all(np.array_equal(a, b) for a, b in zip(s_np[1:11], s_nb[1:11])), "step kernels disagree"

    B, P, N = env.visited.shape
    print(f"grid: batch={B} trajectories={P} nodes={N}")
    print(f"{'kernel':<8}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, f_np, f_nb, args_fn in (
        ("mask", mask_numpy, mask_numba, lambda: margs),
        ("step", step_numpy, step_numba, lambda: step_args(env, actions)),
    ):
        t_np = best_of(f_np, args_fn, args.repeat)
        t_nb = best_of(f_nb, args_fn, args.repeat)
        print(f"{name:<8}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
