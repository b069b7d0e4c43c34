"""Two-agent epsilon-prediction transformer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamSet, Tensor, mse, reshape
from ..config import ModelConfig
from .blocks import (cross_agent_block, dense, dit_block, modulate, modulation, raw_values_embed,
                     raymap_encode, timestep_embed)
from .rope import grid_positions, rope_angles

RAW_VALUES = 16  # per-frame camera vector length
HEAD_INIT_STD = 0.02


@dataclass
class AgentInputs:
    """One agent's denoiser inputs (batched)."""

    x_t: np.ndarray  # [B, f, h, w, latent_c]
    first: np.ndarray  # [B, h, w, latent_c] clean latent of frame 0
    camera: np.ndarray | None = None  # raymap [B, f, h, w, 6*s_t] or raw [B, f, 16*s_t]

    @property
    def grid(self) -> tuple:
        return self.x_t.shape[1:4]


def param_shapes(cfg: ModelConfig) -> dict:
    c, lc = cfg.c, cfg.latent_c
    shapes = {
        "t_embed.fc1.w": (c, c), "t_embed.fc1.b": (c,),
        "t_embed.fc2.w": (c, c), "t_embed.fc2.b": (c,),
        "embed.w": (cfg.cond_channels, c), "embed.b": (c,),
        "head.w": (c, lc), "head.b": (lc,),
        "final.mod.w": (c, 2 * c), "final.mod.b": (2 * c,),
        "final.skip.w": (c, lc), "final.skip.b": (lc,),
    }
    for j in range(cfg.n_blocks):
        p = f"blocks.{j}"
        shapes.update({
            f"{p}.mod.w": (c, 4 * c), f"{p}.mod.b": (4 * c,),
            f"{p}.attn.qkv.w": (c, 3 * c), f"{p}.attn.qkv.b": (3 * c,),
            f"{p}.attn.out.w": (c, c), f"{p}.attn.out.b": (c,),
            f"{p}.ffn.fc1.w": (c, 4 * c), f"{p}.ffn.fc1.b": (4 * c,),
            f"{p}.ffn.fc2.w": (4 * c, c), f"{p}.ffn.fc2.b": (c,),
        })
        if j % 2:
            continue
        if cfg.cross_agent:
            p = f"cross.{j}"
            shapes.update({
                f"{p}.mod.w": (c, 2 * c), f"{p}.mod.b": (2 * c,),
                f"{p}.attn.qkv.w": (c, 3 * c), f"{p}.attn.qkv.b": (3 * c,),
                f"{p}.attn.out.w": (c, c), f"{p}.attn.out.b": (c,),
                f"{p}.proj.w": (c, c), f"{p}.proj.b": (c,),
            })
        if cfg.raymap_mode == "raymap":
            shapes.update({
                f"raymap.{j}.fc1.w": (cfg.ray_channels, c), f"raymap.{j}.fc1.b": (c,),
                f"raymap.{j}.fc2.w": (c, c), f"raymap.{j}.fc2.b": (c,),
            })
        elif cfg.raymap_mode == "raw_values":
            shapes.update({f"rawcam.{j}.w": (RAW_VALUES * cfg.s_t, c), f"rawcam.{j}.b": (c,)})
    return shapes


def _zero_init(name: str) -> bool:
    # adaptive-norm modulations, the noise skip gain, the cross-agent projector and
    # the camera branches' output layers start at zero; all biases too
    return (name.endswith(".b") or ".mod." in name or ".skip." in name or ".proj." in name
            or name.startswith("raymap.") and ".fc2." in name or name.startswith("rawcam."))


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ParamSet:
    rng = np.random.default_rng([int(seed), 0x1417])
    params = ParamSet()
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if _zero_init(name) or name.startswith("cross.") and ".attn." in name:
            arr = np.zeros(shape)
        elif name == "head.w":
            arr = rng.standard_normal(shape) * HEAD_INIT_STD
        else:
            arr = rng.standard_normal(shape) / np.sqrt(shape[0])
        arrays[name] = arr
    # cross-agent attention starts as a copy of its sibling block's attention
    for name in arrays:
        if name.startswith("cross.") and ".attn." in name:
            j = name.split(".")[1]
            arrays[name] = arrays[name.replace(f"cross.{j}.", f"blocks.{j}.", 1)].copy()
    for name in sorted(arrays):
        params[name] = Tensor(arrays[name], dtype=dtype)
    return params


def _dtype(params) -> np.dtype:
    return params["embed.w"].dtype


def _embed(params, cfg: ModelConfig, a: AgentInputs) -> Tensor:
    B, f, h, w, lc = a.x_t.shape
    if lc != cfg.latent_c:
        raise ValueError(f"latent has {lc} channels, model expects {cfg.latent_c}")
    if a.first.shape != (B, h, w, lc):
        raise ValueError(f"first-frame latent {a.first.shape} != {(B, h, w, lc)}")
    cond = np.broadcast_to(a.first[:, None], a.x_t.shape)
    mask = np.zeros((B, f, h, w, 1))
    mask[:, 0] = 1.0
    x = np.concatenate([a.x_t, cond, mask], axis=-1).reshape(B, f * h * w, cfg.cond_channels)
    return dense(params, "embed", Tensor(x, dtype=_dtype(params)))


def _head(params, x: Tensor, temb: Tensor, x_t: np.ndarray) -> Tensor:
    """Noise prediction: modulated linear head plus a per-channel, timestep-gated
    copy of the noisy input (at high noise the noise is nearly the input itself,
    which the normalized token path can only reproduce coarsely)."""
    shift, scale = modulation(params, "final", temb, 2)
    out = reshape(dense(params, "head", modulate(x, shift, scale)), x_t.shape)
    gain = reshape(dense(params, "final.skip", temb), (x_t.shape[0], 1, 1, 1, x_t.shape[-1]))
    return out + gain * Tensor(x_t, dtype=_dtype(params))


def _camera_branch(params, cfg: ModelConfig, j: int, a: AgentInputs) -> Tensor | None:
    if cfg.raymap_mode == "off":
        return None
    if a.camera is None:
        raise ValueError(f"raymap mode {cfg.raymap_mode!r} needs camera inputs")
    B, f, h, w = a.x_t.shape[:4]
    cam = Tensor(a.camera, dtype=_dtype(params))
    if cfg.raymap_mode == "raymap":
        if cam.shape != (B, f, h, w, cfg.ray_channels):
            raise ValueError(f"raymap {cam.shape} does not match latent grid {(B, f, h, w)}")
        return raymap_encode(params, j, cam)
    if cam.shape != (B, f, RAW_VALUES * cfg.s_t):
        raise ValueError(f"raw camera values {cam.shape} != {(B, f, RAW_VALUES * cfg.s_t)}")
    return raw_values_embed(params, j, cam, h, w)


def denoiser_forward(params, cfg: ModelConfig, agents, t, frame_offsets=None):
    """Predict the noise of both agents; returns two [B, f, h, w, latent_c] Tensors.

    ``frame_offsets`` gives each agent's rotary frame-index start inside the
    cross-agent blocks (default: agent 1 at 0, agent 2 right after it).
    """
    a1, a2 = agents
    if a1.x_t.shape != a2.x_t.shape:
        raise ValueError(f"agent latents differ: {a1.x_t.shape} vs {a2.x_t.shape}")
    f, h, w = a1.grid
    if frame_offsets is None:
        frame_offsets = (0, f)
    own = rope_angles(grid_positions(f, h, w), cfg.head_dim)
    joint = rope_angles(np.concatenate([grid_positions(f, h, w, o) for o in frame_offsets]),
                        cfg.head_dim)
    temb = timestep_embed(params, t, cfg.c, _dtype(params))
    x = [_embed(params, cfg, a) for a in agents]
    for j in range(cfg.n_blocks):
        if j % 2 == 0:
            for i, a in enumerate(agents):
                e = _camera_branch(params, cfg, j, a)
                if e is not None:
                    x[i] = x[i] + e
            if cfg.cross_agent:
                x[0], x[1] = cross_agent_block(params, j, x[0], x[1], temb, joint, cfg.n_heads)
        x = [dit_block(params, j, xi, temb, own, cfg.n_heads) for xi in x]
    return tuple(_head(params, xi, temb, a.x_t) for xi, a in zip(x, agents))


def base_forward(params, cfg: ModelConfig, agent: AgentInputs, t) -> Tensor:
    """The single-agent model: same weights with camera branches and cross blocks removed."""
    f, h, w = agent.grid
    own = rope_angles(grid_positions(f, h, w), cfg.head_dim)
    temb = timestep_embed(params, t, cfg.c, _dtype(params))
    x = _embed(params, cfg, agent)
    for j in range(cfg.n_blocks):
        x = dit_block(params, j, x, temb, own, cfg.n_heads)
    return _head(params, x, temb, agent.x_t)


def pair_loss(pred, target) -> Tensor:
    """Mean squared noise error averaged over both agents."""
    (p1, p2), (e1, e2) = pred, target
    e1 = e1 if isinstance(e1, Tensor) else Tensor(e1, dtype=p1.dtype)
    e2 = e2 if isinstance(e2, Tensor) else Tensor(e2, dtype=p2.dtype)
    return (mse(p1, e1) + mse(p2, e2)) * 0.5
