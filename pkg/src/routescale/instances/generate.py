"""Instance generators.

Every random field draws from its own PCG64 stream, derived from the
instance seed with ``SeedSequence(seed, spawn_key=(stream_id,))``.  Adding a
field never shifts the numbers drawn for another one.
"""
from __future__ import annotations

import logging

import numpy as np

from .mutate import apply_mutation
from .rng import STREAM_COORDS, STREAM_DEMANDS, STREAM_DISTANCE_LIMIT, STREAM_TIME_WINDOWS, stream
from .types import (
    HORIZON,
    RHO_MAX,
    Distribution,
    GeneratorConfig,
    ProblemInstance,
    VariantFlags,
    depot_distances,
)

log = logging.getLogger(__name__)


SERVICE_TIME_RANGE = (0.15, 0.18)
WINDOW_LENGTH_RANGE = (0.18, 0.20)
PICKUP_PROBABILITY = 0.2


def vehicle_capacity(scale: int) -> int:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    return 30 + scale // 5


def gen_coords_uniform(scale: int, seed: int) -> np.ndarray:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    return stream(seed, STREAM_COORDS).random((scale + 1, 2))


def cluster_sizes(n_members: int, n_clusters: int) -> np.ndarray:
    sizes = np.full(n_clusters, n_members // n_clusters, dtype=np.int64)
    sizes[: n_members % n_clusters] += 1
    return sizes


def gen_coords_gaussian_mixture(scale: int, clusters: int, spread: float, seed: int) -> np.ndarray:
    """Depot ~ U(0,1)^2, the first ``clusters`` customers are the centres ~ U(0,c)^2,
    the other customers are N(centre, I) draws split evenly over the clusters.
    All points are then min-max scaled per axis."""
    if clusters < 1 or spread < 1:
        raise ValueError("need clusters >= 1 and spread >= 1")
    if scale < clusters:
        raise ValueError(f"scale {scale} < cluster count {clusters}")
    rng = stream(seed, STREAM_COORDS)
    depot = rng.random((1, 2))
    centres = rng.random((clusters, 2)) * spread
    owner = np.repeat(np.arange(clusters), cluster_sizes(scale - clusters, clusters))
    members = centres[owner] + rng.standard_normal((owner.size, 2))
    pts = np.concatenate([depot, centres, members])
    lo, hi = pts.min(0), pts.max(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (pts - lo) / span


def gen_coords(scale: int, distribution: Distribution, seed: int) -> np.ndarray:
    if distribution.kind == "uniform":
        return gen_coords_uniform(scale, seed)
    if distribution.kind == "gaussian_mixture":
        return gen_coords_gaussian_mixture(scale, distribution.clusters, distribution.scale, seed)
    if distribution.kind == "mutated":
        base = gen_coords_uniform(scale, seed)
        customers = apply_mutation(base[1:], distribution.operator, seed=seed)
        return np.concatenate([base[:1], customers])
    raise ValueError(f"unknown distribution kind {distribution.kind!r}")


def gen_demands(scale: int, variant: VariantFlags, seed: int, capacity: int | None = None):
    """Return ``(normalised demands incl. depot, backhaul mask, raw demands)``."""
    capacity = vehicle_capacity(scale) if capacity is None else capacity
    rng = stream(seed, STREAM_DEMANDS)
    linehaul = rng.integers(1, 10, size=scale)
    if variant.backhaul:
        backhaul = rng.integers(1, 10, size=scale)
        pickup = rng.random(scale) < PICKUP_PROBABILITY
        raw = np.where(pickup, backhaul, linehaul)
    else:
        pickup = np.zeros(scale, dtype=bool)
        raw = linehaul
    demands = np.concatenate([[0.0], raw / capacity])
    return demands, pickup, raw


def _separate_from_depot(coords: np.ndarray) -> np.ndarray:
    """Nudge customers that sit exactly on the depot by one ulp."""
    d0 = depot_distances(coords)
    clash = np.flatnonzero(d0 == 0) + 1
    if clash.size:
        coords = coords.copy()
        for i in clash:
            toward = 1.0 if coords[i, 0] < 0.5 else 0.0
            coords[i, 0] = np.nextafter(coords[i, 0], toward)
            log.warning("customer %d coincides with depot; x perturbed to %r", i, coords[i, 0])
    return coords


def gen_time_windows(coords: np.ndarray, seed: int, horizon: float = HORIZON):
    """Return ``(windows (M+1,2), service times (M+1,), coords)``.

    ``coords`` is returned because a customer on top of the depot gets
    nudged (the window formula divides by its depot distance).
    """
    coords = _separate_from_depot(np.asarray(coords, dtype=np.float64))
    n = coords.shape[0] - 1
    rng = stream(seed, STREAM_TIME_WINDOWS)
    service = rng.uniform(*SERVICE_TIME_RANGE, size=n)
    length = rng.uniform(*WINDOW_LENGTH_RANGE, size=n)
    y = rng.random(n)
    d0 = depot_distances(coords)
    start = window_start(d0, service, length, y, horizon)
    windows = np.empty((n + 1, 2))
    windows[0] = (0.0, horizon)
    windows[1:, 0] = start
    windows[1:, 1] = start + length
    return windows, np.concatenate([[0.0], service]), coords


def window_start(d0, service, length, y, horizon=HORIZON):
    e_up = (horizon - service - length) / d0 - 1.0
    return (1.0 + (e_up - 1.0) * y) * d0


def gen_distance_limit(coords: np.ndarray, seed: int, rho_max: float = RHO_MAX) -> float:
    d0 = depot_distances(coords)
    lo = 2.0 * float(d0.max())
    if lo >= rho_max:
        raise ValueError(f"round trip {lo:.4f} exceeds the distance-limit ceiling {rho_max}")
    return float(stream(seed, STREAM_DISTANCE_LIMIT).uniform(lo, rho_max))


def demand_capacity_ratio(instance: ProblemInstance) -> float:
    if instance.scale < 1:
        raise ValueError("instance has no customers")
    return float(instance.demands[1:].mean())


def make_instance(config: GeneratorConfig) -> ProblemInstance:
    m, variant, seed = config.scale, config.variant, config.seed
    capacity = vehicle_capacity(m)
    coords = gen_coords(m, config.distribution, seed)
    demands, pickup, _ = gen_demands(m, variant, seed, capacity)
    windows = None
    service = np.zeros(m + 1)
    if variant.time_window:
        windows, service, coords = gen_time_windows(coords, seed)
    limit = gen_distance_limit(coords, seed) if variant.duration_limit else None
    return ProblemInstance(
        scale=m,
        coords=coords,
        demands=demands,
        raw_capacity=capacity,
        backhaul_mask=pickup,
        service_times=service,
        variant=variant,
        time_windows=windows,
        distance_limit=limit,
        horizon=HORIZON,
        seed=seed,
        distribution=config.distribution.label,
    )
