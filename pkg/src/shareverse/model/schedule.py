"""Variance-preserving noise schedules and forward noising."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    """Index ``t`` runs 1..steps; entry 0 is the clean state (alpha_bar = 1)."""

    alpha_bar: np.ndarray  # [steps + 1]

    @property
    def steps(self) -> int:
        return len(self.alpha_bar) - 1

    @property
    def alpha(self) -> np.ndarray:
        return np.sqrt(self.alpha_bar)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar)

    def coeffs(self, t) -> tuple:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.steps):
            raise ValueError(f"timestep outside [0, {self.steps}]")
        return self.alpha[t], self.sigma[t]


def noise_schedule(steps: int, kind: str = "linear") -> DiffusionSchedule:
    if steps < 1:
        raise ValueError(f"diffusion steps must be >= 1, got {steps}")
    if kind == "linear":
        betas = np.linspace(1e-4, 2e-2, steps)
    elif kind == "cosine":
        s = 0.008
        u = np.arange(steps + 1) / steps
        f = np.cos((u + s) / (1 + s) * np.pi / 2) ** 2
        betas = np.minimum(1.0 - f[1:] / f[:-1], 0.999)
    else:
        raise ValueError(f"unknown schedule {kind!r}")
    return DiffusionSchedule(np.concatenate([[1.0], np.cumprod(1.0 - betas)]))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    """x_t = alpha_t x0 + sigma_t eps; ``t`` is a scalar or one step per leading sample."""
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"q_sample: x0 {x0.shape} and noise {eps.shape} differ")
    if np.any(np.asarray(t) < 1):
        raise ValueError("q_sample: t must be >= 1")
    a, s = schedule.coeffs(t)
    a = np.reshape(a, np.shape(a) + (1,) * (x0.ndim - np.ndim(a)))
    s = np.reshape(s, np.shape(s) + (1,) * (x0.ndim - np.ndim(s)))
    return (a * x0 + s * eps).astype(x0.dtype)
