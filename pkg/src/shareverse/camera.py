"""Camera tracks and their conversion into latent-aligned raymaps.

Conventions: poses are camera-to-world (``R`` maps camera-frame directions to
world, ``t`` is the camera origin in world coordinates, meters). Camera frame is
x right, y down, z forward. Pixel (u, v) has its center at (u + 0.5, v + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

RAY_CHANNELS = 6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 90.0) -> "CameraIntrinsics":
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(float(f), float(f), width / 2.0, height / 2.0, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera resampled by ``factor`` (0.5 = half resolution)."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor, self.cx * factor,
                                self.cy * factor, int(round(self.width * factor)),
                                int(round(self.height * factor)))


@dataclass(frozen=True)
class CameraPose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        check_rotation(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def forward(self) -> np.ndarray:
        """Optical axis in world coordinates."""
        return self.R[:, 2].copy()


def check_rotation(R: np.ndarray, tol: float = 1e-6) -> None:
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation is not orthonormal with det +1")


class CameraTrack:
    """Per-frame intrinsics and poses for one camera."""

    def __init__(self, intrinsics: Sequence[CameraIntrinsics], rotations, translations):
        rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
        translations = np.asarray(translations, dtype=np.float64).reshape(-1, 3)
        intrinsics = list(intrinsics)
        if len(intrinsics) == 1 and len(rotations) > 1:
            intrinsics = intrinsics * len(rotations)
        if not (len(intrinsics) == len(rotations) == len(translations)):
            raise ValueError("intrinsics, rotations and translations differ in frame count")
        if len({(k.width, k.height) for k in intrinsics}) > 1:
            raise ValueError("all frames of a track must share one image size")
        for R in rotations:
            check_rotation(R)
        self.intrinsics = intrinsics
        self.rotations = rotations
        self.translations = translations

    def __len__(self):
        return len(self.rotations)

    @property
    def width(self) -> int:
        return self.intrinsics[0].width

    @property
    def height(self) -> int:
        return self.intrinsics[0].height

    def pose(self, i: int) -> CameraPose:
        return CameraPose(self.rotations[i], self.translations[i])

    def subset(self, frames) -> "CameraTrack":
        frames = list(frames)
        return CameraTrack([self.intrinsics[i] for i in frames], self.rotations[frames],
                           self.translations[frames])

    def with_translations(self, translations) -> "CameraTrack":
        return CameraTrack(self.intrinsics, self.rotations, translations)

    def with_intrinsics(self, k: CameraIntrinsics) -> "CameraTrack":
        return CameraTrack([k] * len(self), self.rotations, self.translations)

    def __eq__(self, other):
        return (isinstance(other, CameraTrack) and self.intrinsics == other.intrinsics
                and np.array_equal(self.rotations, other.rotations)
                and np.array_equal(self.translations, other.translations))


def mean_normalize(tracks: Sequence[CameraTrack], jitter=None) -> list[CameraTrack]:
    """Subtract the joint translation centroid of all frames of all tracks.

    An optional ``jitter`` 3-vector is then added to every translation.
    """
    tracks = list(tracks)
    if not tracks or any(len(t) == 0 for t in tracks):
        raise ValueError("mean_normalize needs at least one non-empty track")
    centroid = np.concatenate([t.translations for t in tracks]).mean(axis=0)
    shift = -centroid
    if jitter is not None:
        shift = shift + np.asarray(jitter, dtype=np.float64).reshape(3)
    return [t.with_translations(t.translations + shift) for t in tracks]


def pixel_ray_directions(K: CameraIntrinsics, H: int, W: int) -> np.ndarray:
    """Camera-frame ray through every pixel center, z fixed to 1. Shape [H, W, 3]."""
    if H < 1 or W < 1:
        raise ValueError(f"image size must be positive, got {H}x{W}")
    u = (np.arange(W, dtype=np.float64) + 0.5 - K.cx) / K.fx
    v = (np.arange(H, dtype=np.float64) + 0.5 - K.cy) / K.fy
    out = np.empty((H, W, 3))
    out[..., 0] = u[None, :]
    out[..., 1] = v[:, None]
    out[..., 2] = 1.0
    return out


def build_raymap_frames(track: CameraTrack) -> np.ndarray:
    """World-frame [r_d, r_o] per pixel and frame: [F, H, W, 6].

    r_d is the rotated z=1 pixel ray (not renormalized); r_o is the
    translation broadcast over pixels.
    """
    H, W = track.height, track.width
    out = np.empty((len(track), H, W, RAY_CHANNELS))
    cache = {}
    for i, (K, R, t) in enumerate(zip(track.intrinsics, track.rotations, track.translations)):
        d = cache.get(K)
        if d is None:
            d = cache[K] = pixel_ray_directions(K, H, W)
        out[i, ..., :3] = d @ R.T
        out[i, ..., 3:] = t
    return out


def bilinear_downsample(x: np.ndarray, factor: int, axes=(1, 2)) -> np.ndarray:
    """Bilinear resize by 1/factor on two axes (half-pixel centers, no antialias)."""
    for axis in axes:
        n = x.shape[axis]
        m = n // factor
        src = (np.arange(m) + 0.5) * factor - 0.5
        lo = np.clip(np.floor(src).astype(int), 0, n - 1)
        hi = np.clip(lo + 1, 0, n - 1)
        w = (src - np.floor(src)).reshape([-1 if i == axis else 1 for i in range(x.ndim)])
        x = np.take(x, lo, axis=axis) * (1.0 - w) + np.take(x, hi, axis=axis) * w
    return x


def temporal_groups(n_frames: int, s_t: int) -> list[list[int]]:
    """Source-frame indices feeding each latent frame.

    Frame 0 forms its own group (replicated ``s_t`` times); later groups are
    consecutive runs of ``s_t`` frames.
    """
    if s_t < 1 or n_frames < 1 or (n_frames - 1) % s_t:
        raise ValueError(f"frame count {n_frames} is not 1 + {s_t}*k")
    groups = [[0] * s_t]
    for j in range(1, (n_frames - 1) // s_t + 1):
        groups.append(list(range(1 + s_t * (j - 1), 1 + s_t * j)))
    return groups


def pack_temporal(x: np.ndarray, s_t: int) -> np.ndarray:
    """[F, ..., C] -> [f, ..., s_t*C], concatenating each group's frames on channels."""
    groups = temporal_groups(x.shape[0], s_t)
    return np.stack([np.concatenate([x[i] for i in g], axis=-1) for g in groups])


def pack_raymap(frames: np.ndarray, s_sp: int, s_t: int) -> np.ndarray:
    """Align per-frame raymaps with the latent grid: [F, H, W, 6] -> [f, H/s_sp, W/s_sp, 6*s_t]."""
    F, H, W, C = frames.shape
    if (F - 1) % s_t:
        raise ValueError(f"pack_raymap: frame count {F} is not 1 + {s_t}*k")
    if H % s_sp or W % s_sp:
        raise ValueError(f"pack_raymap: image {H}x{W} not divisible by spatial factor {s_sp}")
    return pack_temporal(bilinear_downsample(frames, s_sp), s_t)


def raw_camera_values(track: CameraTrack) -> np.ndarray:
    """Per-frame 16-vector [fx/W, fy/H, cx/W, cy/H, R (row-major), t]."""
    rows = []
    for K, R, t in zip(track.intrinsics, track.rotations, track.translations):
        k = [K.fx / K.width, K.fy / K.height, K.cx / K.width, K.cy / K.height]
        rows.append(np.concatenate([k, R.reshape(-1), t]))
    return np.asarray(rows)


# -- text format ----------------------------------------------------------------

def format_track(track: CameraTrack) -> str:
    K = track.intrinsics[0]
    if any(k != K for k in track.intrinsics):
        raise ValueError("text track format stores a single intrinsics row")
    lines = [" ".join(_fmt(v) for v in (K.fx, K.fy, K.cx, K.cy)) + f" {K.width} {K.height}"]
    for R, t in zip(track.rotations, track.translations):
        rt = np.concatenate([R, t[:, None]], axis=1).reshape(-1)
        lines.append(" ".join(_fmt(v) for v in rt))
    return "\n".join(lines) + "\n"


def parse_track(text: str) -> CameraTrack:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 6:
        raise ValueError("track header must be 'fx fy cx cy width height'")
    fx, fy, cx, cy = (float(v) for v in lines[0][:4])
    K = CameraIntrinsics(fx, fy, cx, cy, int(lines[0][4]), int(lines[0][5]))
    body = lines[1:]
    if any(len(r) != 12 for r in body):
        raise ValueError("each pose line must hold 12 floats")
    rt = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(-1, 3, 4)
    return CameraTrack([K] * len(rt), rt[:, :, :3], rt[:, :, 3])


def write_track(path, track: CameraTrack) -> None:
    Path(path).write_text(format_track(track), encoding="ascii")


def read_track(path) -> CameraTrack:
    return parse_track(Path(path).read_text(encoding="ascii"))


def _fmt(v: float) -> str:
    return repr(float(v))
