"""Closed-form parameter and FLOPs counts for ``RoutingPolicy``.

FLOPs are 2 x multiply-accumulates of the matrix products; norms, softmax and
activations are ignored.  With N = M + 1 nodes, d = hidden width, f = feed-forward width:

  embedding            2 * N * f_in * d
  encoder layer        2 * (4 N d^2 + 2 N^2 d + 3 N d f)
  decoder K/V cache    2 * 2 N d^2                      (once per instance)
  decoder step         2 * ((d+5) d + 2 d^2 + 3 N d)    (per trajectory per step)

A rollout takes M + ceil(5 M / C) decoding steps, C = vehicle capacity (an
estimate of the depot returns at mean demand 5).
"""
from __future__ import annotations

import math

from ..instances.generate import vehicle_capacity
from .config import ModelConfig


def param_count(config: ModelConfig) -> int:
    d, f, L = config.hidden_dim, config.ffn_dim, config.layers
    embed = 2 * config.input_dim * d
    layer = 4 * d * d + 3 * d * f + 2 * d
    decoder = (d + 5) * d + 4 * d * d
    return embed + L * layer + decoder


def decode_steps(scale: int) -> int:
    return scale + math.ceil(5 * scale / vehicle_capacity(scale))


def encoder_flops(config: ModelConfig, scale: int) -> float:
    n, d, f = scale + 1, config.hidden_dim, config.ffn_dim
    embed = n * config.input_dim * d
    layer = 4 * n * d * d + 2 * n * n * d + 3 * n * d * f
    cache = 2 * n * d * d
    return 2.0 * (embed + config.layers * layer + cache)


def decoder_step_flops(config: ModelConfig, scale: int) -> float:
    n, d = scale + 1, config.hidden_dim
    return 2.0 * ((d + 5) * d + 2 * d * d + 3 * n * d)


def flops_estimate(config: ModelConfig, scale: int, n_traj: int, aug: bool = False) -> float:
    """GFLOPs to decode one instance with ``n_traj`` trajectories (per view when ``aug``)."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    total = encoder_flops(config, scale) + n_traj * decode_steps(scale) * decoder_step_flops(config, scale)
    return total * (8 if aug else 1) / 1e9
