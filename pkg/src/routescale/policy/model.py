"""Transformer routing policy: attention encoder over nodes, context-query decoder."""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..env.batch import BatchEnv
from ..env.rollout import RolloutResult, force_starts
from .config import ModelConfig
from .spectral import block_power_iteration, init_block, sigma_estimate


class NonFiniteActivationError(FloatingPointError):
    pass


class SNLinear(nn.Module):
    """Linear layer whose weight may be divided by its spectral norm.

    With ``spectral`` on, the forward weight is ``W / sigma(W)``.  ``prepare``
    computes that once per rollout (optionally advancing the persistent power
    iteration) so decoding steps reuse it.
    """

    def __init__(self, in_dim, out_dim, bias=False, spectral=True, block=8, generator=None):
        super().__init__()
        bound = 1.0 / math.sqrt(in_dim)
        self.weight = nn.Parameter(torch.empty(out_dim, in_dim).uniform_(-bound, bound, generator=generator))
        self.bias = nn.Parameter(torch.empty(out_dim).uniform_(-bound, bound, generator=generator)) if bias else None
        self.spectral = spectral
        self.register_buffer("sn_v", init_block(in_dim, out_dim, block, generator))
        self.register_buffer("sn_u", torch.zeros(out_dim, self.sn_v.shape[1]))
        self._cached = None
        if spectral:
            self.advance(30)

    @torch.no_grad()
    def advance(self, iters: int) -> None:
        u, v = block_power_iteration(self.weight, self.sn_v.to(self.weight.dtype), iters)
        self.sn_u.copy_(u)
        self.sn_v.copy_(v)

    def sigma(self) -> torch.Tensor:
        return sigma_estimate(self.weight, self.sn_u.to(self.weight.dtype), self.sn_v.to(self.weight.dtype))

    def effective_weight(self) -> torch.Tensor:
        if not self.spectral:
            return self.weight
        s = self.sigma()
        if s.detach().abs() < 1e-12:
            return self.weight
        return self.weight / s

    def prepare(self, update: bool) -> None:
        if self.spectral and update:
            self.advance(1)
        self._cached = self.effective_weight()

    def release(self) -> None:
        self._cached = None

    @torch.no_grad()
    def normalize_(self, iters: int) -> None:
        if not torch.any(self.weight):
            return
        self.advance(iters)
        s = sigma_estimate(self.weight, self.sn_u.to(self.weight.dtype), self.sn_v.to(self.weight.dtype))
        if s.abs() > 1e-12:
            self.weight.div_(s)

    def forward(self, x):
        w = self._cached if self._cached is not None else self.effective_weight()
        return F.linear(x, w, self.bias)


class RMSNorm(nn.Module):
    def __init__(self, dim, eps=1e-6):
        super().__init__()
        self.eps = eps
        self.gain = nn.Parameter(torch.ones(dim))

    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.gain


def _split(x, heads):
    *lead, n, d = x.shape
    return x.view(*lead, n, heads, d // heads).transpose(-2, -3)


def _merge(x):
    *lead, h, n, dk = x.shape
    return x.transpose(-2, -3).reshape(*lead, n, h * dk)


def attention(q, k, v, mask=None):
    """Scaled dot-product attention; ``mask`` is True where keys are allowed."""
    scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, -1) @ v


class MultiHeadAttention(nn.Module):
    def __init__(self, cfg: ModelConfig, mk):
        super().__init__()
        d = cfg.hidden_dim
        self.heads = cfg.heads
        self.wq, self.wk, self.wv, self.wo = mk(d, d), mk(d, d), mk(d, d), mk(d, d)

    def forward(self, x, y):
        q = _split(self.wq(x), self.heads)
        k = _split(self.wk(y), self.heads)
        v = _split(self.wv(y), self.heads)
        return self.wo(_merge(attention(q, k, v)))


class SwiGLU(nn.Module):
    def __init__(self, cfg: ModelConfig, mk):
        super().__init__()
        d, f = cfg.hidden_dim, cfg.ffn_dim
        self.w1, self.w2, self.w3 = mk(d, f), mk(d, f), mk(f, d)

    def forward(self, x):
        return self.w3(F.silu(self.w1(x)) * self.w2(x))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig, mk):
        super().__init__()
        self.mha = MultiHeadAttention(cfg, mk)
        self.norm1 = RMSNorm(cfg.hidden_dim, cfg.rms_eps)
        self.ffn = SwiGLU(cfg, mk)
        self.norm2 = RMSNorm(cfg.hidden_dim, cfg.rms_eps)

    def forward(self, h):
        h = self.norm1(h + self.mha(h, h))
        return self.norm2(h + self.ffn(h))


class RoutingPolicy(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(seed)
        d = config.hidden_dim

        def mk(i, o):
            return SNLinear(i, o, spectral=config.spectral_norm, block=config.sn_block, generator=gen)

        self.depot_embed = mk(config.input_dim, d)
        self.node_embed = mk(config.input_dim, d)
        self.layers = nn.ModuleList(EncoderLayer(config, mk) for _ in range(config.layers))
        self.context = mk(d + 5, d)
        self.dec_q, self.dec_k, self.dec_v, self.dec_o = mk(d, d), mk(d, d), mk(d, d), mk(d, d)

    # -- spectral weight caching ---------------------------------------
    def sn_layers(self):
        return [m for m in self.modules() if isinstance(m, SNLinear)]

    def prepare(self, update: bool = False) -> None:
        for m in self.sn_layers():
            m.prepare(update)

    @torch.no_grad()
    def advance_spectral(self, iters: int = 1) -> None:
        """One power-iteration step per layer; called after each optimizer step."""
        if self.config.spectral_norm:
            for m in self.sn_layers():
                m.advance(iters)

    def release(self) -> None:
        for m in self.sn_layers():
            m.release()

    # -- encoder ----------------------------------------------------------
    def embed(self, feats: torch.Tensor) -> torch.Tensor:
        if feats.shape[-1] == 6 and not self.config.tw_input:
            feats = feats[..., :3]
        if feats.shape[-1] != self.config.input_dim:
            raise ValueError(f"node feature width {feats.shape[-1]} != model input width {self.config.input_dim}")
        return torch.cat([self.depot_embed(feats[..., :1, :]), self.node_embed(feats[..., 1:, :])], -2)

    def encode_embedded(self, h: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if not torch.isfinite(h).all():
                raise NonFiniteActivationError(f"non-finite activation after encoder layer {i}")
        return h

    def encode(self, feats: torch.Tensor) -> torch.Tensor:
        return self.encode_embedded(self.embed(feats))

    # -- decoder ----------------------------------------------------------
    def decoder_cache(self, h: torch.Tensor):
        heads = self.config.heads
        return _split(self.dec_k(h), heads), _split(self.dec_v(h), heads)

    def decode(self, h, cache, cur, ctx, mask) -> torch.Tensor:
        """Log-probabilities (B, P, N) for the next action; masked entries are -inf.

        h: (B, N, d), cur: (B, P) long, ctx: (B, P, 5), mask: (B, P, N) bool.
        """
        cfg = self.config
        k, v = cache
        idx = cur.unsqueeze(-1).expand(-1, -1, h.shape[-1])
        h_cur = torch.gather(h, 1, idx)
        hc = self.context(torch.cat([h_cur, ctx.to(h.dtype)], -1))
        q = _split(self.dec_q(hc), cfg.heads)  # (B, h, P, dk)
        glimpse = attention(q, k, v, mask.unsqueeze(1))
        qc = self.dec_o(_merge(glimpse))  # (B, P, d)
        u = cfg.clip * torch.tanh(qc @ h.transpose(-1, -2) / math.sqrt(cfg.kv_dim))
        u = u.masked_fill(~mask, float("-inf"))
        return torch.log_softmax(u, -1)

    # -- rollouts ---------------------------------------------------------
    def rollout(self, batch, starts=None, greedy=True, generator=None, replay=None,
                n_traj=None) -> RolloutResult:
        """Decode every trajectory to completion.

        ``starts`` (B, P) forces the first customer; its log-probability is not
        counted.  ``replay`` (B, P, T) is a previous ``actions`` array whose
        moves are teacher-forced.
        Returns summed log-probabilities as a differentiable (B, P) tensor.
        """
        dtype = next(self.parameters()).dtype
        P = starts.shape[1] if starts is not None else (n_traj or 1)
        env = BatchEnv(batch, P)
        self.prepare()
        try:
            h = self.encode(features_tensor(batch, dtype))
            cache = self.decoder_cache(h)
            valid = force_starts(env, starts) if starts is not None else np.ones((batch.size, P), bool)
            logp = torch.zeros(batch.size, P, dtype=dtype)
            t = 0 if starts is None else 1
            while not env.all_done:
                mask = env.mask()
                # copies: env.step mutates these arrays in place and autograd keeps the gather index
                lp = self.decode(h, cache, torch.tensor(env.cur),
                                 torch.tensor(env.context()), torch.tensor(mask))
                if replay is not None:
                    act = torch.as_tensor(replay[..., t], dtype=torch.long)
                elif greedy:
                    act = lp.detach().argmax(-1)
                else:
                    act = torch.multinomial(lp.detach().exp().view(-1, lp.shape[-1]), 1,
                                            generator=generator).view(lp.shape[:2])
                logp = logp + lp.gather(-1, act.unsqueeze(-1)).squeeze(-1)
                env.step(act.numpy(), mask)
                t += 1
        finally:
            self.release()
        return RolloutResult(env.action_array(), env.cost.copy(), valid, logp)


def features_tensor(batch, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(batch.node_features(), dtype=dtype)


def embed_nodes(instance, policy: RoutingPolicy) -> torch.Tensor:
    from ..env.batch import InstanceBatch

    feats = features_tensor(InstanceBatch.from_instances([instance]), next(policy.parameters()).dtype)
    return policy.embed(feats)[0]


def encoder_forward(h0: torch.Tensor, policy: RoutingPolicy) -> torch.Tensor:
    return policy.encode_embedded(h0)


def decoder_step(h: torch.Tensor, state, instance, policy: RoutingPolicy) -> np.ndarray:
    """Action distribution over nodes for a single ``RouteState``."""
    from ..env.core import _to_env

    env = _to_env(state, instance)
    mask = env.mask()
    dtype = h.dtype
    hb = h.unsqueeze(0) if h.dim() == 2 else h
    with torch.no_grad():
        logp = policy.decode(hb, policy.decoder_cache(hb), torch.as_tensor(env.cur),
                             torch.as_tensor(env.context(), dtype=dtype), torch.as_tensor(mask))
    return logp.exp()[0, 0].double().numpy()
