"""Paired-frame reconstruction metrics and the other-agent position probe."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera import CameraTrack
from .config import Config
from .model.sampler import sample
from .model.vae import to_rgb8
from .training import PreparedClip, make_schedule, make_vae
from .world.render import VIEWS
from .world.trajectory import BODY_EXTENTS, CAMERA_HEIGHT, FRUSTUM_FAR, FRUSTUM_NEAR

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes differ, {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(255.0 ** 2 / mse)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-x * x / (2 * sigma * sigma))
    return w / w.sum()


def _filter_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation over the first two axes, 'valid' region only."""
    n = len(w)
    x = np.lib.stride_tricks.sliding_window_view(x, n, axis=0) @ w
    return np.lib.stride_tricks.sliding_window_view(x, n, axis=1) @ w


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM (11x11 Gaussian, sigma 1.5), averaged over channels."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ, {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValueError(f"ssim: frames must be at least {SSIM_WINDOW} px, got {a.shape[:2]}")
    a = a.astype(np.float64).reshape(a.shape[0], a.shape[1], -1)
    b = b.astype(np.float64).reshape(b.shape[0], b.shape[1], -1)
    w = gaussian_window()
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    s_aa = _filter_valid(a * a, w) - mu_a * mu_a
    s_bb = _filter_valid(b * b, w) - mu_b * mu_b
    s_ab = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * s_ab + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (s_aa + s_bb + C2)
    return float(np.mean(np.mean(num / den, axis=(0, 1))))


def quadrants(frame: np.ndarray) -> dict:
    """Split a four-view grid frame (or video) into its named views."""
    H, W = frame.shape[-3:-1]
    h, w = H // 2, W // 2
    return {"front": frame[..., :h, :w, :], "rear": frame[..., :h, w:, :],
            "left": frame[..., h:, :w, :], "right": frame[..., h:, w:, :]}


def front_view(video: np.ndarray, four_views: bool) -> np.ndarray:
    return quadrants(video)["front"] if four_views else video


# -- position probe -------------------------------------------------------------------

def red_mask(frame: np.ndarray, ratio: float = 1.5, minimum: float = 80.0) -> np.ndarray:
    f = frame.astype(np.float64)
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    return (r > ratio * np.maximum(g, b)) & (r > minimum)


def red_centroid(frame: np.ndarray, ratio: float = 1.5, minimum: float = 80.0):
    """(u, v) centroid of red-dominant pixels in pixel-center coordinates, or None."""
    rows, cols = np.nonzero(red_mask(frame, ratio, minimum))
    if len(rows) == 0:
        return None
    return np.array([cols.mean() + 0.5, rows.mean() + 0.5])


def project(point: np.ndarray, K, R: np.ndarray, t: np.ndarray):
    """Camera-frame coordinates and pixel position of a world point."""
    p = R.T @ (np.asarray(point, dtype=np.float64) - t)
    uv = np.array([K.fx * p[0] / p[2] + K.cx, K.fy * p[1] / p[2] + K.cy]) if p[2] > 0 else None
    return p, uv


def other_body(track: CameraTrack, k: int) -> tuple:
    """Body center and yaw of an agent, recovered from its front-camera pose."""
    center = track.translations[k] + np.array([0.0, 0.0, BODY_EXTENTS[2] / 2.0 - CAMERA_HEIGHT])
    fwd = track.rotations[k][:, 2]
    return center, float(np.arctan2(fwd[1], fwd[0]))


def body_corners(center: np.ndarray, yaw: float, extents=BODY_EXTENTS) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    half = np.asarray(extents) / 2.0
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    local = signs * half
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return center + local @ rot.T


def in_frustum(p_cam: np.ndarray, K) -> bool:
    z = p_cam[2]
    if not FRUSTUM_NEAR < z < FRUSTUM_FAR:
        return False
    tan_h = (K.width / 2.0) / K.fx
    tan_v = (K.height / 2.0) / K.fy
    return abs(p_cam[0]) <= z * tan_h and abs(p_cam[1]) <= z * tan_v


@dataclass
class ProbeFrame:
    frame: int
    eligible: bool
    projected: np.ndarray | None = None
    detected: np.ndarray | None = None

    @property
    def miss(self) -> bool:
        return self.eligible and self.detected is None

    @property
    def error(self) -> float | None:
        if not self.eligible or self.detected is None:
            return None
        return float(np.linalg.norm(self.detected - self.projected))


def position_probe(front: np.ndarray, own: CameraTrack, other: CameraTrack, scale: float = 1.0,
                   ratio: float = 1.5, minimum: float = 80.0) -> list[ProbeFrame]:
    """Compare where the other agent should appear with where red pixels are.

    ``front`` is [n, h, w, 3]; ``scale`` maps the track's intrinsics to that
    resolution (0.5 for the front quadrant of a four-view grid). Frames where
    any body corner leaves the front frustum are not eligible.
    """
    out = []
    for k in range(len(front)):
        K = own.intrinsics[k].scaled(scale) if scale != 1.0 else own.intrinsics[k]
        R, t = own.rotations[k], own.translations[k]
        center, yaw = other_body(other, k)
        eligible = all(in_frustum(project(c, K, R, t)[0], K) for c in body_corners(center, yaw))
        if not eligible:
            out.append(ProbeFrame(k, False))
            continue
        _, uv = project(center, K, R, t)
        out.append(ProbeFrame(k, True, uv, red_centroid(front[k], ratio, minimum)))
    return out


def probe_summary(frames: Sequence[ProbeFrame]) -> dict:
    elig = [f for f in frames if f.eligible]
    errs = [f.error for f in elig if f.error is not None]
    return {"frames": len(elig),
            "mean_px": float(np.mean(errs)) if errs else float("nan"),
            "miss_rate": (sum(f.miss for f in elig) / len(elig)) if elig else float("nan")}


# -- paired evaluation ----------------------------------------------------------------

@dataclass
class EvalReport:
    clips: list = field(default_factory=list)  # per-clip metric dicts
    probe: list = field(default_factory=list)  # all ProbeFrames

    def aggregate(self) -> dict:
        out = {}
        keys = sorted({k for c in self.clips for k in c})
        for k in keys:
            vals = [c[k] for c in self.clips if k in c]
            out[f"{k}.mean"] = float(np.mean(vals))
        s = probe_summary(self.probe)
        out["probe.mean_px"] = s["mean_px"]
        out["probe.miss_rate"] = s["miss_rate"]
        out["probe.frames"] = s["frames"]
        out["clips"] = len(self.clips)
        return out

    def to_text(self) -> str:
        lines = [f"{k}={_fmt(v)}" for k, v in self.aggregate().items()]
        for i, c in enumerate(self.clips):
            lines += [f"clip_{i:05d}.{k}={_fmt(v)}" for k, v in sorted(c.items())]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def frame_metrics(gen: np.ndarray, gt: np.ndarray, four_views: bool) -> dict:
    """PSNR/SSIM of generated frames 1..n-1 (frame 0 reported on its own)."""
    out = {"psnr": float(np.mean([psnr(g, r) for g, r in zip(gen[1:], gt[1:])])),
           "ssim": float(np.mean([ssim(g, r) for g, r in zip(gen[1:], gt[1:])])),
           "frame0_psnr": psnr(gen[0], gt[0])}
    if four_views:
        qg, qr = quadrants(gen), quadrants(gt)
        for v in VIEWS:
            out[f"psnr_{v}"] = float(np.mean([psnr(g, r) for g, r in zip(qg[v][1:], qr[v][1:])]))
    return out


def generate_clip(params, cfg: Config, clip: PreparedClip, seed: int, n_steps: int,
                  progress=None) -> tuple:
    """Sample both agents for one clip and decode to RGB8 videos."""
    m = cfg.model
    vae = make_vae(cfg)
    z1, z2 = sample(params, m, make_schedule(cfg), [z[0] for z in clip.latents], clip.cameras,
                    clip.latents[0].shape[:3], seed, n_steps, progress)
    return to_rgb8(vae.decode(z1)), to_rgb8(vae.decode(z2))


def paired_eval(params, cfg: Config, clips: Sequence[PreparedClip], seed: int | None = None,
                n_steps: int | None = None, progress=None, videos=None) -> EvalReport:
    """Sample every clip and score it against its rendered ground truth.

    ``videos`` may supply already generated videos (per clip, two RGB8 arrays)
    in place of sampling, e.g. ground truth for an oracle check.
    """
    seed = cfg["eval.seed"] if seed is None else seed
    n_steps = cfg["eval.steps"] if n_steps is None else n_steps
    four = cfg["ablate.four_views"]
    report = EvalReport()
    for i, clip in enumerate(clips):
        if videos is None:
            gen = generate_clip(params, cfg, clip, seed * 100_003 + i, n_steps)
        else:
            gen = videos[i]
        per = [frame_metrics(g, r, four) for g, r in zip(gen, clip.frames)]
        report.clips.append({k: float(np.mean([p[k] for p in per])) for k in per[0]})
        for a in range(2):
            report.probe += position_probe(front_view(gen[a], four), clip.tracks[a],
                                           clip.tracks[1 - a], 0.5 if four else 1.0,
                                           cfg["eval.red_ratio"], cfg["eval.red_min"])
        if progress is not None:
            c = report.clips[-1]
            progress(f"eval clip {i + 1}/{len(clips)} psnr={c['psnr']:.3f} ssim={c['ssim']:.4f}")
    return report
