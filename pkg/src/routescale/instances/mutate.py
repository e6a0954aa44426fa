"""Point-set mutation operators for out-of-distribution test instances.

Each operator acts on an (n, 2) array of points in the unit square and
returns the displaced points *before* they are clamped back into the square,
together with the indices it touched.  ``apply_mutation`` does the clamping.

The parameter ranges live in ``MUTATION_DEFAULTS`` (versioned); any entry can
be overridden per call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import STREAM_MUTATION, stream
from .types import MUTATION_OPERATORS

MUTATION_DEFAULTS_VERSION = 1
MUTATION_DEFAULTS = {
    "explosion": {"radius": (0.1, 0.3), "push_rate": 10.0},
    "implosion": {"radius": (0.1, 0.3), "shrink": (0.0, 1.0)},
    "rotation": {"fraction": (0.2, 0.5), "angle": (0.0, 2 * np.pi)},
    "linear_projection": {"fraction": (0.2, 0.5), "jitter": 0.0},
    "expansion": {"width": (0.1, 0.3), "push_rate": 10.0},
    "grid": {"fraction": (0.1, 0.3), "cells": (2, 6), "side": (0.1, 0.4)},
}


@dataclass
class Mutation:
    points: np.ndarray  # unclamped
    selected: np.ndarray  # indices of moved points
    info: dict


def _pick(value, rng):
    """Draw from a (lo, hi) range; scalars pass through unchanged."""
    if isinstance(value, tuple):
        lo, hi = value
        if isinstance(lo, int) and isinstance(hi, int):
            return int(rng.integers(lo, hi + 1))
        return float(rng.uniform(lo, hi))
    return value


def _subset(n, fraction, rng):
    k = max(1, int(round(fraction * n)))
    return np.sort(rng.choice(n, size=min(k, n), replace=False))


def _line(rng):
    anchor = rng.random(2)
    theta = rng.uniform(0.0, np.pi)
    return anchor, np.array([np.cos(theta), np.sin(theta)])


def explosion(points, params, rng):
    centre = rng.random(2)
    radius = _pick(params["radius"], rng)
    offset = points - centre
    dist = np.sqrt((offset * offset).sum(1))
    hit = np.flatnonzero((dist < radius) & (dist > 0))
    out = points.copy()
    push = radius + rng.exponential(1.0 / params["push_rate"], size=hit.size)
    out[hit] = centre + offset[hit] / dist[hit, None] * push[:, None]
    return Mutation(out, hit, {"centre": centre, "radius": radius})


def implosion(points, params, rng):
    centre = rng.random(2)
    radius = _pick(params["radius"], rng)
    offset = points - centre
    dist = np.sqrt((offset * offset).sum(1))
    hit = np.flatnonzero(dist < radius)
    lo, hi = params["shrink"]
    factor = rng.uniform(lo, hi, size=hit.size)
    out = points.copy()
    out[hit] = centre + offset[hit] * factor[:, None]
    return Mutation(out, hit, {"centre": centre, "radius": radius})


def rotation(points, params, rng):
    pivot = rng.random(2)
    angle = _pick(params["angle"], rng)
    hit = _subset(len(points), _pick(params["fraction"], rng), rng)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    out = points.copy()
    out[hit] = (points[hit] - pivot) @ rot.T + pivot
    return Mutation(out, hit, {"pivot": pivot, "angle": angle})


def linear_projection(points, params, rng):
    anchor, direction = _line(rng)
    hit = _subset(len(points), _pick(params["fraction"], rng), rng)
    along = (points[hit] - anchor) @ direction
    out = points.copy()
    out[hit] = anchor + along[:, None] * direction
    jitter = params.get("jitter", 0.0)
    if jitter:
        normal = np.array([-direction[1], direction[0]])
        out[hit] += rng.normal(0.0, jitter, size=hit.size)[:, None] * normal
    return Mutation(out, hit, {"anchor": anchor, "direction": direction})


def expansion(points, params, rng):
    anchor, direction = _line(rng)
    normal = np.array([-direction[1], direction[0]])
    width = _pick(params["width"], rng)
    rel = points - anchor
    side = rel @ normal
    hit = np.flatnonzero(np.abs(side) < width)
    push = width + rng.exponential(1.0 / params["push_rate"], size=hit.size)
    sign = np.where(side[hit] >= 0, 1.0, -1.0)
    foot = anchor + (rel[hit] @ direction)[:, None] * direction
    out = points.copy()
    out[hit] = foot + (sign * push)[:, None] * normal
    return Mutation(out, hit, {"anchor": anchor, "direction": direction, "width": width})


def grid(points, params, rng):
    hit = _subset(len(points), _pick(params["fraction"], rng), rng)
    nx = _pick(params["cells"], rng)
    ny = _pick(params["cells"], rng)
    side = _pick(params["side"], rng)
    origin = rng.uniform(0.0, 1.0 - side, size=2)
    ix = np.rint(points[hit, 0] * (nx - 1))
    iy = np.rint(points[hit, 1] * (ny - 1))
    out = points.copy()
    out[hit, 0] = origin[0] + ix * side / (nx - 1)
    out[hit, 1] = origin[1] + iy * side / (ny - 1)
    return Mutation(out, hit, {"origin": origin, "shape": (nx, ny), "side": side})


OPERATORS = {
    "explosion": explosion,
    "implosion": implosion,
    "rotation": rotation,
    "linear_projection": linear_projection,
    "expansion": expansion,
    "grid": grid,
}
assert tuple(OPERATORS) == MUTATION_OPERATORS


def mutate(points, operator, params=None, seed=0) -> Mutation:
    """Run one operator without clamping (useful for inspecting the geometry)."""
    key = operator.strip().lower().replace(" ", "_")
    if key not in OPERATORS:
        raise ValueError(f"unknown mutation operator {operator!r}; expected one of {MUTATION_OPERATORS}")
    merged = dict(MUTATION_DEFAULTS[key])
    merged.update(params or {})
    rng = stream(seed, STREAM_MUTATION)
    return OPERATORS[key](np.asarray(points, dtype=np.float64), merged, rng)


def apply_mutation(points, operator, params=None, seed=0) -> np.ndarray:
    return np.clip(mutate(points, operator, params, seed).points, 0.0, 1.0)
