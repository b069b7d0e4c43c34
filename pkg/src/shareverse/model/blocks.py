"""Transformer pieces of the two-agent denoiser.

Token tensors are [B, N, c] with N = f*h*w in (frame, row, col) row-major
order. Every function reads its weights from a ParamSet under a name prefix.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (Tensor, broadcast_to, concat, gelu, layernorm, linear, matmul, reshape,
                        softmax, split)
from .rope import apply_rope


def dense(params, prefix: str, x: Tensor) -> Tensor:
    return linear(x, params[f"{prefix}.w"], params[f"{prefix}.b"])


def timestep_sinusoid(t, dim: int) -> np.ndarray:
    """[B, dim] sin/cos features of integer timesteps."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None]
    out = np.concatenate([np.cos(ang), np.sin(ang)], axis=1)
    if dim % 2:
        out = np.concatenate([out, np.zeros((len(t), 1))], axis=1)
    return out


def timestep_embed(params, t, c: int, dtype) -> Tensor:
    """Sinusoid -> linear -> GELU -> linear; returns the GELU-activated embedding [B, c]."""
    x = Tensor(timestep_sinusoid(t, c), dtype=dtype)
    h = dense(params, "t_embed.fc2", gelu(dense(params, "t_embed.fc1", x)))
    return gelu(h)


def modulation(params, prefix: str, temb: Tensor, n: int) -> list[Tensor]:
    """Adaptive layernorm shift/scale vectors, each [B, 1, c]."""
    m = dense(params, f"{prefix}.mod", temb)
    B, c = m.shape[0], m.shape[1] // n
    return split(reshape(m, (B, 1, n * c)), n, axis=2)


def modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return layernorm(x) * (scale + 1.0) + shift


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    d = q.shape[-1]
    return softmax(matmul(q, k.permute(0, 1, 3, 2)) * (1.0 / np.sqrt(d)), axis=-1)


def self_attention(params, prefix: str, x: Tensor, angles: np.ndarray, n_heads: int) -> Tensor:
    """Multi-head self-attention with rotary positions; includes the output projection."""
    B, N, c = x.shape
    hd = c // n_heads
    qkv = reshape(dense(params, f"{prefix}.qkv", x), (B, N, 3, n_heads, hd)).permute(2, 0, 3, 1, 4)
    q, k, v = (reshape(p, (B, n_heads, N, hd)) for p in split(qkv, 3, axis=0))
    q, k = apply_rope(q, angles), apply_rope(k, angles)
    o = matmul(attention_weights(q, k), v)
    o = reshape(o.permute(0, 2, 1, 3), (B, N, c))
    return dense(params, f"{prefix}.out", o)


def dit_block(params, j: int, x: Tensor, temb: Tensor, angles: np.ndarray, n_heads: int) -> Tensor:
    p = f"blocks.{j}"
    sh1, sc1, sh2, sc2 = modulation(params, p, temb, 4)
    x = x + self_attention(params, f"{p}.attn", modulate(x, sh1, sc1), angles, n_heads)
    h = dense(params, f"{p}.ffn.fc2", gelu(dense(params, f"{p}.ffn.fc1", modulate(x, sh2, sc2))))
    return x + h


def cross_agent_block(params, j: int, f1: Tensor, f2: Tensor, temb: Tensor,
                      angles: np.ndarray, n_heads: int) -> tuple[Tensor, Tensor]:
    """Joint attention over both agents' tokens, projected and added back per agent.

    ``angles`` covers the concatenated sequence, agent 1's tokens first.
    """
    if f1.shape != f2.shape:
        raise ValueError(f"cross-agent block: agent features differ, {f1.shape} vs {f2.shape}")
    p = f"cross.{j}"
    n = f1.shape[1]
    joint = concat([f1, f2], axis=1)
    shift, scale = modulation(params, p, temb, 2)
    a = self_attention(params, f"{p}.attn", modulate(joint, shift, scale), angles, n_heads)
    d1, d2 = split(dense(params, f"{p}.proj", a), [n, n], axis=1)
    return f1 + d1, f2 + d2


def raymap_encode(params, j: int, ray: Tensor) -> Tensor:
    """24 -> c -> c MLP over raymap cells; [B, f, h, w, 24] -> [B, f*h*w, c]."""
    B, f, h, w, r = ray.shape
    x = reshape(ray, (B, f * h * w, r))
    return dense(params, f"raymap.{j}.fc2", gelu(dense(params, f"raymap.{j}.fc1", x)))


def raw_values_embed(params, j: int, raw: Tensor, h: int, w: int) -> Tensor:
    """Linear embedding of per-frame camera values, constant over each latent frame.

    ``raw`` is [B, f, 16*s_t] (a temporal group's frames concatenated).
    """
    B, f, r = raw.shape
    e = dense(params, f"rawcam.{j}", raw)
    c = e.shape[-1]
    e = broadcast_to(reshape(e, (B, f, 1, c)), (B, f, h * w, c))
    return reshape(e, (B, f * h * w, c))
