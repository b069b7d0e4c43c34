"""Fixed latent codec standing in for a learned video VAE.

Patchify groups ``s_t`` frames and ``s_sp x s_sp`` pixels into one latent
cell. Frame 0 is its own temporal group, replicated to fill it.
"""

from __future__ import annotations

import numpy as np

from ..camera import temporal_groups

MODES = ("invertible-patchify", "orthonormal-projection")


def patch_dim(s_sp: int, s_t: int) -> int:
    return 3 * s_sp * s_sp * s_t


def to_unit(rgb8: np.ndarray) -> np.ndarray:
    return rgb8.astype(np.float64) / 127.5 - 1.0


def to_rgb8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def patchify(video: np.ndarray, s_sp: int, s_t: int) -> np.ndarray:
    """[1+F, H, W, 3] -> [f, h, w, s_t*s_sp*s_sp*3] (order: time, row, col, rgb)."""
    n, H, W, C = video.shape
    if C != 3:
        raise ValueError(f"video must have 3 channels, got {C}")
    if (n - 1) % s_t:
        raise ValueError(f"frame count {n} is not 1 + {s_t}*k")
    if H % s_sp or W % s_sp:
        raise ValueError(f"frame size {H}x{W} not divisible by spatial factor {s_sp}")
    idx = np.concatenate(temporal_groups(n, s_t))
    f, h, w = len(idx) // s_t, H // s_sp, W // s_sp
    x = video[idx].reshape(f, s_t, h, s_sp, w, s_sp, 3)
    return x.transpose(0, 2, 4, 1, 3, 5, 6).reshape(f, h, w, patch_dim(s_sp, s_t))


def unpatchify(z: np.ndarray, s_sp: int, s_t: int) -> np.ndarray:
    """Inverse of ``patchify``; the replicas of frame 0 are averaged."""
    f, h, w, d = z.shape
    if d != patch_dim(s_sp, s_t):
        raise ValueError(f"latent channels {d} != patch size {patch_dim(s_sp, s_t)}")
    x = z.reshape(f, h, w, s_t, s_sp, s_sp, 3).transpose(0, 3, 1, 4, 2, 5, 6)
    x = x.reshape(f, s_t, h * s_sp, w * s_sp, 3)
    # pairwise sum so identical replicas average back bitwise
    reps = list(x[0])
    while len(reps) > 1:
        reps = [reps[i] + reps[i + 1] if i + 1 < len(reps) else reps[i]
                for i in range(0, len(reps), 2)]
    first = reps[0] * (1.0 / s_t)
    return np.concatenate([first[None], x[1:].reshape(-1, h * s_sp, w * s_sp, 3)])


def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II, rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (i + 0.5) * k / n) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


# orthonormal opponent-color transform: luma, red-green, yellow-blue
_COLOR = np.array([[1, 1, 1], [1, -1, 0], [1, 1, -2]], dtype=np.float64)
_COLOR /= np.linalg.norm(_COLOR, axis=1, keepdims=True)


def projection_basis(s_sp: int, s_t: int, latent_c: int, seed: int = 0) -> np.ndarray:
    """Row-orthonormal [latent_c, patch_dim] map.

    Rows are separable (time, row, col, color) DCT atoms. Temporally constant
    atoms come first, so up to ``3*s_sp**2`` channels every latent frame
    (frame 0 included) round-trips through decode and encode exactly. Within
    that, lower spatial frequency and luma win. The kept rows are then mixed
    by a seeded random rotation so channel variances are comparable.
    """
    d = patch_dim(s_sp, s_t)
    if not 1 <= latent_c <= d:
        raise ValueError(f"latent channels must be in [1, {d}], got {latent_c}")
    Dt, Ds = _dct_matrix(s_t), _dct_matrix(s_sp)
    atoms, keys = [], []
    for kt in range(s_t):
        for ky in range(s_sp):
            for kx in range(s_sp):
                for kc in range(3):
                    atoms.append(np.einsum("t,y,x,c->tyxc", Dt[kt], Ds[ky], Ds[kx],
                                           _COLOR[kc]).reshape(-1))
                    keys.append((kt > 0, kt, max(ky, kx) + (1 if kc else 0), ky + kx, kc))
    order = sorted(range(d), key=lambda i: keys[i])[:latent_c]
    basis = np.stack([atoms[i] for i in order])
    rng = np.random.default_rng([int(seed), 0xBA515])
    q, r = np.linalg.qr(rng.standard_normal((latent_c, latent_c)))
    q *= np.sign(np.diag(r))
    return q @ basis


class PatchVAE:
    """Encoder/decoder pair; ``encode`` takes pixel values in [-1, 1]."""

    def __init__(self, s_sp: int, s_t: int, latent_c: int | None = None,
                 mode: str = "invertible-patchify", seed: int = 0):
        if mode not in MODES:
            raise ValueError(f"unknown vae mode {mode!r}; choose from {MODES}")
        d = patch_dim(s_sp, s_t)
        if mode == "invertible-patchify":
            if latent_c not in (None, d):
                raise ValueError(f"invertible-patchify needs latent channels {d}, got {latent_c}")
            latent_c = d
            self.basis = None
        else:
            if latent_c is None:
                raise ValueError("orthonormal-projection needs latent channels")
            self.basis = projection_basis(s_sp, s_t, latent_c, seed)
        self.s_sp, self.s_t, self.latent_c, self.mode = s_sp, s_t, latent_c, mode

    def latent_shape(self, n_frames: int, H: int, W: int) -> tuple:
        return (1 + (n_frames - 1) // self.s_t, H // self.s_sp, W // self.s_sp, self.latent_c)

    def encode(self, video: np.ndarray) -> np.ndarray:
        z = patchify(np.asarray(video, dtype=np.float64), self.s_sp, self.s_t)
        return z if self.basis is None else z @ self.basis.T

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.latent_c:
            raise ValueError(f"latent has {z.shape[-1]} channels, codec expects {self.latent_c}")
        return unpatchify(z if self.basis is None else z @ self.basis, self.s_sp, self.s_t)
