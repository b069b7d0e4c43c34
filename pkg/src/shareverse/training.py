"""Training loop for the two-agent denoiser: data preparation, steps, checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Adam, NumericError, ParamSet, Tensor, backward, trace
from .camera import (CameraTrack, build_raymap_frames, mean_normalize, pack_raymap, pack_temporal,
                     raw_camera_values)
from .config import RESUMABLE_KEYS, Config, ConfigError
from .model.checkpoint import load_checkpoint_file, save_checkpoint_file
from .model.denoiser import AgentInputs, denoiser_forward, init_params, pair_loss, param_shapes
from .model.schedule import DiffusionSchedule, noise_schedule, q_sample
from .model.vae import PatchVAE, to_unit
from .world.clips import ClipPair
from .world.storage import DataError

JITTER_RANGE = 2.0  # meters, uniform per axis, training only


def make_vae(cfg: Config) -> PatchVAE:
    m = cfg.model
    return PatchVAE(m.s_sp, m.s_t, m.latent_c, m.vae_mode)


def make_schedule(cfg: Config) -> DiffusionSchedule:
    return noise_schedule(cfg["diffusion.steps"], cfg["diffusion.schedule"])


def camera_inputs(tracks: Sequence[CameraTrack], cfg: Config, jitter=None) -> tuple:
    """Per-agent camera conditioning from jointly mean-normalized front tracks."""
    mode = cfg["ablate.raymap_mode"]
    if mode == "off":
        return None, None
    m = cfg.model
    normed = mean_normalize(tracks, jitter)
    if mode == "raymap":
        return tuple(pack_raymap(build_raymap_frames(t), m.s_sp, m.s_t) for t in normed)
    return tuple(pack_temporal(raw_camera_values(t), m.s_t) for t in normed)


def jitter_camera(cam: np.ndarray | None, jitter: np.ndarray, mode: str) -> np.ndarray | None:
    """Add a world translation to prepared camera inputs (origins shift, directions do not)."""
    if cam is None:
        return None
    out = cam.copy()
    if mode == "raymap":
        for g in range(out.shape[-1] // 6):
            out[..., 6 * g + 3:6 * g + 6] += jitter
    else:
        for g in range(out.shape[-1] // 16):
            out[..., 16 * g + 13:16 * g + 16] += jitter
    return out


@dataclass
class PreparedClip:
    latents: tuple  # two [f, h, w, latent_c]
    cameras: tuple  # two camera inputs or (None, None)
    frames: tuple  # two uint8 ground-truth videos [n_frames, H, W, 3]
    tracks: tuple  # two CameraTrack cut to n_frames


def check_clip(clip: ClipPair, cfg: Config) -> None:
    n = cfg["data.frames"]
    if clip.grid_shape != cfg.grid_shape:
        raise ConfigError(f"clip grid {clip.grid_shape} != configured {cfg.grid_shape}")
    if len(clip.videos[0]) < n:
        raise ConfigError(f"clip has {len(clip.videos[0])} frames, config needs {n}")
    if (clip.views == 4) != cfg["ablate.four_views"]:
        raise ConfigError(f"clip holds {clip.views}-view videos but ablate.four_views="
                          f"{cfg['ablate.four_views']}")


def prepare_clip(clip: ClipPair, cfg: Config, vae: PatchVAE | None = None) -> PreparedClip:
    check_clip(clip, cfg)
    vae = vae or make_vae(cfg)
    n = cfg["data.frames"]
    frames = tuple(v[:n] for v in clip.videos)
    tracks = tuple(t.subset(range(n)) for t in clip.tracks)
    latents = tuple(vae.encode(to_unit(v)) for v in frames)
    return PreparedClip(latents, camera_inputs(tracks, cfg), frames, tracks)


def batch_indices(n_clips: int, batch: int, step: int, seed: int) -> list[int]:
    """Clip indices for 0-based ``step``: consecutive slices of per-epoch seeded shuffles."""
    out = []
    for pos in range(step * batch, (step + 1) * batch):
        epoch, k = divmod(pos, n_clips)
        perm = np.random.default_rng([int(seed), epoch, 0xE90C]).permutation(n_clips)
        out.append(int(perm[k]))
    return out


@dataclass
class TrainState:
    step: int
    params: ParamSet
    losses: list = field(default_factory=list)

    # per-step randomness is a pure function of (seed, step), so the RNG state
    # is fully described by ``step``


def new_state(cfg: Config) -> TrainState:
    dtype = np.float64 if cfg["train.dtype"] == "float64" else np.float32
    return TrainState(0, init_params(cfg.model, cfg["train.seed"], dtype))


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(step), 0x57E9])


def make_batch(clips: Sequence[PreparedClip], cfg: Config, schedule: DiffusionSchedule,
               rng: np.random.Generator, dtype, jitter: bool = True):
    """Noised inputs and noise targets for a list of prepared clips."""
    B = len(clips)
    t = rng.integers(1, schedule.steps + 1, size=B)
    mode = cfg["ablate.raymap_mode"]
    agents, targets = [], []
    for i in range(2):
        x0 = np.stack([c.latents[i] for c in clips])
        eps = rng.standard_normal(x0.shape)
        xt = q_sample(x0, t, eps, schedule)
        cams = None
        if mode != "off":
            cams = []
            for c in clips:
                cam = c.cameras[i]
                if jitter:
                    cam = jitter_camera(cam, rng.uniform(-JITTER_RANGE, JITTER_RANGE, 3), mode)
                cams.append(cam)
            cams = np.stack(cams).astype(dtype)
        agents.append(AgentInputs(xt.astype(dtype), x0[:, 0].astype(dtype), cams))
        targets.append(eps.astype(dtype))
    return tuple(agents), t, tuple(targets)


def loss_and_grads(params: ParamSet, cfg: Config, agents, t, targets):
    with trace():
        pred = denoiser_forward(params, cfg.model, agents, t)
        loss = pair_loss(pred, targets)
    return loss, backward(loss, params)


def train_step(state: TrainState, batch: Sequence[PreparedClip], cfg: Config,
               schedule: DiffusionSchedule, optimizer: Adam) -> float:
    """One Adam update on every parameter; advances ``state`` in place, returns the loss."""
    if not batch:
        raise ValueError("train_step needs a non-empty batch")
    dtype = state.params["embed.w"].dtype
    rng = step_rng(cfg["train.seed"], state.step)
    try:
        agents, t, targets = make_batch(batch, cfg, schedule, rng, dtype)
        loss, grads = loss_and_grads(state.params, cfg, agents, t, targets)
        optimizer.step(state.params, grads, state.step + 1)
    except NumericError as e:
        raise NumericError(f"step {state.step}: {e}") from e
    value = float(loss.item())
    state.step += 1
    state.losses.append(value)
    return value


def train(cfg: Config, clips: Sequence[PreparedClip], state: TrainState | None = None,
          progress=None) -> TrainState:
    """Run until ``train.steps`` updates have been applied in total."""
    if not clips:
        raise ValueError("no training clips")
    state = state or new_state(cfg)
    schedule = make_schedule(cfg)
    opt = Adam(cfg["train.lr"])
    total, B, seed = cfg["train.steps"], cfg["train.batch"], cfg["train.seed"]
    while state.step < total:
        idx = batch_indices(len(clips), B, state.step, seed)
        loss = train_step(state, [clips[i] for i in idx], cfg, schedule, opt)
        if progress is not None:
            progress(f"train step {state.step}/{total} loss={loss:.6f}")
    return state


# -- checkpoints -----------------------------------------------------------------------

def state_tensors(state: TrainState) -> dict:
    out = {}
    for name in state.params:
        out[f"param/{name}"] = state.params[name].data
        if name in state.params.m:
            out[f"adam_m/{name}"] = state.params.m[name]
            out[f"adam_v/{name}"] = state.params.v[name]
    out["state/step"] = np.array([state.step], dtype=np.float64)
    out["state/losses"] = np.array(state.losses, dtype=np.float64)
    return out


def save_checkpoint(state: TrainState, cfg: Config, path) -> None:
    save_checkpoint_file(path, state_tensors(state), cfg)


def load_checkpoint(path, expect: Config | None = None, resuming: bool = False):
    """Returns (TrainState, Config echo). With ``expect``, a differing echo is refused."""
    tensors, echo = load_checkpoint_file(path, expect, RESUMABLE_KEYS if resuming else ())
    params = ParamSet()
    for key, arr in tensors.items():
        kind, _, name = key.partition("/")
        if kind == "param":
            params[name] = Tensor(arr, requires_grad=True)
    for key, arr in tensors.items():
        kind, _, name = key.partition("/")
        if kind == "adam_m":
            params.m[name] = arr
        elif kind == "adam_v":
            params.v[name] = arr
    expected = param_shapes(echo.model)
    if set(params) != set(expected):
        missing, extra = sorted(set(expected) - set(params)), sorted(set(params) - set(expected))
        raise DataError(f"checkpoint {path}: parameter set does not match its config "
                        f"(missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise DataError(f"checkpoint {path}: {name} has shape {params[name].shape}, "
                            f"config implies {shape}")
    if "state/step" not in tensors or "state/losses" not in tensors:
        raise DataError(f"checkpoint {path}: missing training state")
    step = int(tensors["state/step"][0])
    state = TrainState(step, params, [float(v) for v in tensors["state/losses"]])
    return state, echo
