"""Fused neural-network primitives with hand-written gradients."""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, Tensor, primitive

GELU_C = math.sqrt(2.0 / math.pi)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, weight.shape[0])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[1],))

    def grad_fn(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return primitive("linear", out, inputs, grad_fn)


def layernorm(x: Tensor, eps: float = 1e-5, weight: Tensor | None = None,
              bias: Tensor | None = None) -> Tensor:
    """Normalize over the last axis; optional elementwise affine."""
    n = x.shape[-1]
    if n == 0:
        raise ShapeError("layernorm: empty feature axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data
    inputs = [x] + [p for p in (weight, bias) if p is not None]

    def grad_fn(g):
        grads = []
        if bias is not None:
            grads.append(g.reshape(-1, n).sum(axis=0))
        if weight is not None:
            grads.insert(0, (g * xhat).reshape(-1, n).sum(axis=0))
            g = g * weight.data
        gx = inv * (g - g.mean(axis=-1, keepdims=True)
                    - xhat * (g * xhat).mean(axis=-1, keepdims=True))
        return (gx, *grads)

    return primitive("layernorm", out, inputs, grad_fn)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    a = x.data
    inner = GELU_C * (a + 0.044715 * (a * a * a))
    th = np.tanh(inner)
    out = 0.5 * a * (1.0 + th)

    def grad_fn(g):
        dinner = GELU_C * (1.0 + 3 * 0.044715 * a * a)
        return (g * (0.5 * (1.0 + th) + 0.5 * a * (1.0 - th * th) * dinner),)

    return primitive("gelu", out, (x,), grad_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"softmax: zero-length axis {axis} in shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return primitive("softmax", out, (x,), grad_fn)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids out of range for table {table.shape}")
    out = table.data[ids]

    def grad_fn(g):
        full = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return primitive("embedding", out, (table,), grad_fn)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = a.data - b.data
    n = d.size
    out = np.asarray((d * d).sum() / n, dtype=a.dtype)

    def grad_fn(g):
        ga = (2.0 / n) * g * d
        return ga, -ga

    return primitive("mse", out, (a, b), grad_fn)
