"""Rotary position embedding over (frame, row, col) token grids.

Channels rotate in interleaved pairs (2i, 2i+1). The ``head_dim / 2`` pairs
are split into three bands: rows and cols get ``pairs // 3`` each and the
frame band takes the rest.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, primitive

ROPE_BASE = 10000.0


def band_sizes(head_dim: int) -> tuple:
    if head_dim % 2:
        raise ValueError(f"rotary head_dim must be even, got {head_dim}")
    pairs = head_dim // 2
    per = pairs // 3
    if per < 1:
        raise ValueError(f"head_dim {head_dim} too small for three rotary bands")
    return pairs - 2 * per, per, per


def grid_positions(f: int, h: int, w: int, frame_offset: int = 0) -> np.ndarray:
    """[f*h*w, 3] integer (frame, row, col) for tokens in row-major order."""
    F, Y, X = np.meshgrid(np.arange(f) + frame_offset, np.arange(h), np.arange(w), indexing="ij")
    return np.stack([F.ravel(), Y.ravel(), X.ravel()], axis=1)


def rope_angles(positions: np.ndarray, head_dim: int) -> np.ndarray:
    """[N, head_dim/2] rotation angle of every channel pair at every position."""
    cols = []
    for axis, n in enumerate(band_sizes(head_dim)):
        freqs = ROPE_BASE ** (-np.arange(n) / n)
        cols.append(np.outer(positions[:, axis], freqs))
    return np.concatenate(cols, axis=1)


def rotate_pairs(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    x0, x1 = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos
    return out


def apply_rope(x: Tensor, angles: np.ndarray) -> Tensor:
    """Rotate ``x`` [..., N, head_dim] by per-token ``angles`` [N, head_dim/2]."""
    if x.shape[-2] != angles.shape[0] or x.shape[-1] != 2 * angles.shape[1]:
        raise ValueError(f"rope: tokens {x.shape} do not match angle table {angles.shape}")
    cos = np.cos(angles).astype(x.dtype)
    sin = np.sin(angles).astype(x.dtype)
    out = rotate_pairs(x.data, cos, sin)

    def grad_fn(g):
        return (rotate_pairs(g, cos, -sin),)

    return primitive("rope", out, (x,), grad_fn)
