"""Deterministic DDIM sampling of both agents with first-frame clamping."""

from __future__ import annotations

import numpy as np

from ..autodiff import no_trace
from ..config import ModelConfig
from .denoiser import AgentInputs, denoiser_forward
from .schedule import DiffusionSchedule


def ddim_timesteps(total: int, n_steps: int) -> np.ndarray:
    """Evenly strided descending sub-schedule from ``total`` down to >= 1."""
    if not 1 <= n_steps <= total:
        raise ValueError(f"sampling steps must be in [1, {total}], got {n_steps}")
    ts = np.rint(np.linspace(total, 1, n_steps)).astype(int)
    return np.unique(ts)[::-1]


def sample(params, cfg: ModelConfig, schedule: DiffusionSchedule, first_latents, cameras,
           grid: tuple, seed: int, n_steps: int, progress=None) -> tuple:
    """Generate two latent videos [f, h, w, latent_c].

    ``first_latents`` are the clean frame-0 latents [h, w, latent_c] of each
    agent; ``cameras`` their unbatched camera inputs (or ``None``).
    """
    f, h, w = grid
    shape = (1, f, h, w, cfg.latent_c)
    dtype = params["embed.w"].dtype
    rng = np.random.default_rng([int(seed), 0x5A3])
    x = [rng.standard_normal(shape).astype(dtype) for _ in range(2)]
    firsts = [np.asarray(z, dtype=dtype)[None] for z in first_latents]
    cams = [None if c is None else np.asarray(c, dtype=dtype)[None] for c in cameras]
    ts = ddim_timesteps(schedule.steps, n_steps)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        agents = tuple(AgentInputs(xi, fi, ci) for xi, fi, ci in zip(x, firsts, cams))
        with no_trace():
            eps = denoiser_forward(params, cfg, agents, np.array([t]))
        a_t, s_t = schedule.coeffs(t)
        a_p, s_p = schedule.coeffs(t_prev)
        nxt = []
        for xi, ei, fi in zip(x, eps, firsts):
            x0 = (xi.astype(np.float64) - s_t * ei.data) / a_t
            xn = (a_p * x0 + s_p * ei.data).astype(dtype)
            xn[:, 0] = fi
            nxt.append(xn)
        x = nxt
        if progress is not None:
            progress(f"sample step {i + 1}/{len(ts)} t={t}")
    return x[0][0], x[1][0]
