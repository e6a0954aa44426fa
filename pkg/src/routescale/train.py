"""REINFORCE training with a per-instance multi-start baseline."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .env.batch import InstanceBatch
from .env.rollout import start_nodes
from .instances.generate import make_instance
from .instances.types import (
    TRAINING_DISTRIBUTIONS,
    VARIANT_NAMES,
    Distribution,
    GeneratorConfig,
    VariantFlags,
)
from .policy.checkpoint import save_checkpoint
from .policy.config import ModelConfig
from .policy.model import RoutingPolicy

LOG_COLUMNS = ("epoch", "step", "loss", "mean_obj", "grad_norm_preclip")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message, snapshot):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    steps_per_epoch: int = 200
    lr: float = 1e-4
    weight_decay: float = 1e-6
    grad_clip_norm: float = 1.0
    scale_set: tuple = (100,)
    variant_set: tuple = VARIANT_NAMES
    distribution_set: tuple = tuple(d.label for d in TRAINING_DISTRIBUTIONS)
    seed: int = 0
    n_starts: Optional[int] = None  # default: one start per customer
    batch_size: Optional[int] = None  # default: batch_size_for_scale

    def __post_init__(self):
        for key in ("scale_set", "variant_set", "distribution_set"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        if not self.scale_set:
            raise ValueError("scale_set must be nonempty")
        if self.lr < 0 or self.weight_decay < 0 or self.grad_clip_norm <= 0:
            raise ValueError("lr, weight_decay must be >= 0 and grad_clip_norm > 0")
        if self.epochs < 0 or self.steps_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and steps_per_epoch >= 1")
        for v in self.variant_set:
            VariantFlags.from_name(v)
        for d in self.distribution_set:
            Distribution.parse(d)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("scale_set", "variant_set", "distribution_set"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise KeyError(f"unknown train config key(s): {', '.join(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class BatchSpec:
    scale: int
    batch_size: int
    items: tuple  # (variant name, distribution label, instance seed) per instance

    def instances(self) -> list:
        return [make_instance(GeneratorConfig(self.scale, VariantFlags.from_name(v),
                                              Distribution.parse(d), s))
                for v, d, s in self.items]


def batch_size_for_scale(n: int) -> int:
    """64 up to 125 customers, then floor(20 * (200 / n) ** 2.5)."""
    if n < 1:
        raise ValueError("scale must be >= 1")
    if n <= 125:
        return 64
    return int(math.floor(20.0 * (200.0 / n) ** 2.5))


def sample_batch_spec(config: TrainConfig, rng) -> BatchSpec:
    """One scale per batch; variant and distribution drawn independently per item.

    ``rng`` is a numpy Generator or an integer seed.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scale = int(config.scale_set[rng.integers(len(config.scale_set))])
    size = config.batch_size or batch_size_for_scale(scale)
    v_idx = rng.integers(len(config.variant_set), size=size)
    d_idx = rng.integers(len(config.distribution_set), size=size)
    seeds = rng.integers(0, 2**62, size=size)
    items = tuple((config.variant_set[v], config.distribution_set[d], int(s))
                  for v, d, s in zip(v_idx, d_idx, seeds))
    return BatchSpec(scale, size, items)


def pomo_rollout(batch: InstanceBatch, policy: RoutingPolicy, n_starts: Optional[int] = None,
                 greedy: bool = False, generator=None):
    """Multi-start rollouts; returns ``(objectives (B, P) array, logprob sums (B, P) tensor, valid)``."""
    starts = start_nodes(batch, n_starts or batch.n_nodes - 1)
    res = policy.rollout(batch, starts, greedy=greedy, generator=generator)
    return res.cost, res.logp, res.valid


def advantages(objectives, valid=None) -> np.ndarray:
    obj = np.asarray(objectives, dtype=np.float64)
    if obj.ndim != 2 or obj.shape[1] < 2:
        raise ValueError("shared baseline needs at least 2 starts per instance")
    valid = np.ones(obj.shape, bool) if valid is None else np.asarray(valid, bool)
    if (valid.sum(1) < 1).any():
        raise ValueError("an instance has no valid start")
    baseline = np.where(valid, obj, 0.0).sum(1, keepdims=True) / valid.sum(1, keepdims=True)
    return np.where(valid, obj - baseline, 0.0)


def reinforce_loss(objectives, logprobs: torch.Tensor, valid=None) -> torch.Tensor:
    """Mean of (objective - per-instance mean objective) * log-prob over valid starts.

    Objectives are costs, so minimizing the loss pushes probability toward
    shorter tours.  Gradients flow through ``logprobs`` only.
    """
    adv = advantages(objectives, valid)
    weight = np.ones(adv.shape) if valid is None else np.asarray(valid, np.float64)
    adv_t = torch.as_tensor(adv, dtype=logprobs.dtype)
    w_t = torch.as_tensor(weight, dtype=logprobs.dtype)
    return (adv_t * logprobs * w_t).sum() / w_t.sum()


def clip_gradients(named_parameters: Iterable, max_norm: float = 1.0) -> float:
    """Scale gradients in place to global L2 norm <= ``max_norm``; returns the pre-clip norm."""
    params = []
    for name, p in named_parameters:
        if p.grad is None:
            continue
        if not torch.isfinite(p.grad).all():
            raise FloatingPointError(f"non-finite gradient in parameter {name}")
        params.append(p)
    if not params:
        return 0.0
    total = math.sqrt(sum(float(p.grad.double().pow(2).sum()) for p in params))
    if total > max_norm:
        # shave a few ulps so rounding in low-precision grads cannot overshoot max_norm
        ulp = max(torch.finfo(p.grad.dtype).eps for p in params)
        scale = max_norm / total * (1.0 - 4.0 * ulp)
        for p in params:
            p.grad.mul_(scale)
    return total


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    mean_obj: float
    grad_norms: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    mean_objs: list = field(default_factory=list)

    @property
    def grad_norm(self) -> float:
        return float(np.mean(self.grad_norms)) if self.grad_norms else 0.0

    def rows(self):
        for i, (l, o, g) in enumerate(zip(self.losses, self.mean_objs, self.grad_norms)):
            yield {"epoch": self.epoch, "step": i, "loss": l, "mean_obj": o, "grad_norm_preclip": g}


def make_optimizer(policy: RoutingPolicy, config: TrainConfig):
    return torch.optim.AdamW(policy.parameters(), lr=config.lr, weight_decay=config.weight_decay)


class TrainState:
    """Everything that advances between steps: batch sampler and sampling generator."""

    def __init__(self, config: TrainConfig):
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
        self.generator = torch.Generator().manual_seed(int(config.seed))
        self.step = 0


def train_step(config: TrainConfig, policy: RoutingPolicy, optimizer, state: TrainState):
    spec = sample_batch_spec(config, state.rng)
    batch = InstanceBatch.from_instances(spec.instances())
    policy.train()
    obj, logp, valid = pomo_rollout(batch, policy, config.n_starts, greedy=False,
                                    generator=state.generator)
    loss = reinforce_loss(obj, logp, valid)
    mean_obj = float(obj[valid].mean())
    if not torch.isfinite(loss):
        snapshot = {"step": state.step, "scale": spec.scale, "items": spec.items[:8],
                    "loss": float(loss), "mean_obj": mean_obj}
        raise TrainingDivergedError(f"non-finite loss at step {state.step}", snapshot)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    norm = clip_gradients(policy.named_parameters(), config.grad_clip_norm)
    optimizer.step()
    policy.advance_spectral(1)
    state.step += 1
    return float(loss.detach()), mean_obj, norm


def train_epoch(config: TrainConfig, policy: RoutingPolicy, optimizer, state: TrainState,
                epoch: int = 0) -> EpochMetrics:
    m = EpochMetrics(epoch, 0.0, 0.0)
    for _ in range(config.steps_per_epoch):
        loss, obj, norm = train_step(config, policy, optimizer, state)
        m.losses.append(loss)
        m.mean_objs.append(obj)
        m.grad_norms.append(norm)
    m.loss = float(np.mean(m.losses))
    m.mean_obj = float(np.mean(m.mean_objs))
    return m


def train(config: TrainConfig, model_config: ModelConfig, out_dir=None,
          policy: Optional[RoutingPolicy] = None, callback=None) -> tuple[RoutingPolicy, list]:
    """Run ``config.epochs`` epochs; writes ``train_log.csv`` and a checkpoint per epoch to ``out_dir``."""
    policy = policy or RoutingPolicy(model_config, seed=config.seed)
    optimizer = make_optimizer(policy, config)
    state = TrainState(config)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    history = []
    fh = None
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            fh = open(out / "train_log.csv", "w", newline="")
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
        for epoch in range(config.epochs):
            try:
                metrics = train_epoch(config, policy, optimizer, state, epoch)
            except TrainingDivergedError as exc:
                if out is not None:
                    (out / "diverged.json").write_text(json.dumps(exc.snapshot, indent=1))
                raise
            history.append(metrics)
            if writer is not None:
                writer.writerows(metrics.rows())
                fh.flush()
                save_checkpoint(policy, out / f"checkpoint_{epoch:04d}",
                                extra={"epoch": epoch, "train_config": config.to_dict()})
            if callback is not None:
                callback(metrics)
    finally:
        if fh is not None:
            fh.close()
    return policy, history


def greedy_multistart_objectives(policy: RoutingPolicy, instances: Sequence, n_starts=None,
                                 chunk: int = 256) -> np.ndarray:
    """Best greedy multi-start objective per instance (instances must share a scale)."""
    policy.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(instances), chunk):
            batch = InstanceBatch.from_instances(instances[i:i + chunk])
            obj, _, valid = pomo_rollout(batch, policy, n_starts, greedy=True)
            out.append(np.where(valid, obj, np.inf).min(1))
    return np.concatenate(out)
