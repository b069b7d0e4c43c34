"""Camera rig and a flat-shaded raycaster for box worlds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraIntrinsics, CameraPose, CameraTrack, pixel_ray_directions
from .scene import Scene
from .trajectory import CAMERA_HEIGHT, AgentState

VIEWS = ("front", "rear", "left", "right")
VIEW_YAW = {"front": 0.0, "rear": np.pi, "left": np.pi / 2, "right": -np.pi / 2}
HFOV_DEG = 90.0


def yaw_rotation(yaw: float) -> np.ndarray:
    """Camera-to-world rotation for a level camera facing heading ``yaw``."""
    c, s = np.cos(yaw), np.sin(yaw)
    right = (s, -c, 0.0)
    down = (0.0, 0.0, -1.0)
    forward = (c, s, 0.0)
    return np.array([right, down, forward]).T


def camera_rig(agent: AgentState, view: str) -> list[CameraPose]:
    """Pose of one of the four body-mounted cameras for every frame."""
    off = VIEW_YAW[view]
    return [CameraPose(yaw_rotation(y + off), p + np.array([0.0, 0.0, CAMERA_HEIGHT]))
            for p, y in zip(agent.positions, agent.yaw)]


def rig_track(agent: AgentState, view: str, K: CameraIntrinsics, frames=None) -> CameraTrack:
    frames = range(len(agent)) if frames is None else frames
    off = VIEW_YAW[view]
    rots = [yaw_rotation(agent.yaw[k] + off) for k in frames]
    trans = [agent.positions[k] + np.array([0.0, 0.0, CAMERA_HEIGHT]) for k in frames]
    return CameraTrack([K], np.array(rots), np.array(trans))


@dataclass(frozen=True)
class Body:
    """Oriented box standing on the ground (a vehicle)."""

    center: tuple
    yaw: float
    extents: tuple
    color: tuple

    @classmethod
    def of(cls, agent: AgentState, k: int) -> "Body":
        return cls(tuple(agent.body_center(k)), float(agent.yaw[k]), agent.extents, agent.color)


def slab_intersect(origin, dirs, lo, hi):
    """Ray/AABB entry distance for rays ``origin + t*dirs``; inf where missed.

    ``lo``/``hi`` are [B, 3], ``origin`` [3], ``dirs`` [N, 3]; returns [B, N].
    """
    o = np.asarray(origin, dtype=float)
    tnear = tfar = None
    for ax in range(3):
        d = dirs[:, ax]
        with np.errstate(divide="ignore"):
            inv = 1.0 / np.where(d == 0.0, 1e-300, d)
        t1 = np.multiply.outer(lo[:, ax] - o[ax], inv)
        t2 = np.multiply.outer(hi[:, ax] - o[ax], inv)
        a, b = np.minimum(t1, t2), np.maximum(t1, t2)
        tnear = a if tnear is None else np.maximum(tnear, a)
        tfar = b if tfar is None else np.minimum(tfar, b)
    hit = (tfar >= tnear) & (tfar > 0.0)
    entry = np.where(tnear > 0.0, tnear, tfar)
    return np.where(hit, entry, np.inf)


def _ground_colors(scene: Scene, pts: np.ndarray) -> np.ndarray:
    colors = np.broadcast_to(np.asarray(scene.ground_color, float), pts.shape[:-1] + (3,)).copy()
    road = np.zeros(pts.shape[:-1], dtype=bool)
    for r in scene.roads:
        road |= (pts[..., 0] >= r.x0) & (pts[..., 0] <= r.x1) & (pts[..., 1] >= r.y0) \
            & (pts[..., 1] <= r.y1)
    colors[road] = scene.road_color
    return colors


def raycast(scene: Scene, bodies, origin: np.ndarray, dirs: np.ndarray):
    """Nearest-hit distance (in units of ``dirs``) and unshaded RGB per ray."""
    n = len(dirs)
    t_best = np.full(n, np.inf)
    color = np.zeros((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = np.where(dirs[:, 2] < 0.0, -origin[2] / dirs[:, 2], np.inf)
    ground = np.isfinite(tg)
    t_best[ground] = tg[ground]
    if ground.any():
        pts = origin + tg[ground, None] * dirs[ground]
        color[ground] = _ground_colors(scene, pts)
    if scene.boxes:
        lo = np.array([b.lo for b in scene.boxes], dtype=float)
        hi = np.array([b.hi for b in scene.boxes], dtype=float)
        tb = slab_intersect(origin, dirs, lo, hi)
        idx = tb.argmin(axis=0)
        tmin = tb[idx, np.arange(n)]
        closer = tmin < t_best
        t_best[closer] = tmin[closer]
        palette = np.array([b.color for b in scene.boxes], dtype=float)
        color[closer] = palette[idx[closer]]
    for body in bodies:
        c, s = np.cos(body.yaw), np.sin(body.yaw)
        # world -> body frame is a rotation by -yaw about z
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        o_l = rot @ (origin - np.asarray(body.center))
        d_l = dirs @ rot.T
        half = np.asarray(body.extents) / 2.0
        tb = slab_intersect(o_l, d_l, -half[None], half[None])[0]
        closer = tb < t_best
        t_best[closer] = tb[closer]
        color[closer] = body.color
    return t_best, color


def shade(scene: Scene, t: np.ndarray, color: np.ndarray, ray_len: np.ndarray) -> np.ndarray:
    """Ambient tint plus exponential fog toward the sky color; misses show sky."""
    sky = np.asarray(scene.sky_color, dtype=float)
    out = np.empty_like(color)
    hit = np.isfinite(t)
    dist = t[hit] * ray_len[hit]
    fog = 1.0 - np.exp(-scene.fog_density * dist)
    lit = color[hit] * np.asarray(scene.tint)
    out[hit] = (1.0 - fog)[:, None] * lit + fog[:, None] * sky
    out[~hit] = sky
    return out


def to_rgb8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def render_view(scene: Scene, bodies, camera: tuple, H: int, W: int) -> np.ndarray:
    """Render one RGB8 frame [H, W, 3] from ``camera = (intrinsics, pose)``."""
    if H < 8 or W < 8:
        raise ValueError(f"render size must be at least 8x8, got {H}x{W}")
    K, pose = camera
    dirs = pixel_ray_directions(K, H, W).reshape(-1, 3) @ pose.R.T
    t, color = raycast(scene, bodies, pose.t, dirs)
    return to_rgb8(shade(scene, t, color, np.linalg.norm(dirs, axis=1))).reshape(H, W, 3)


def render_agent_views(scene: Scene, agents, who: int, k: int, K: CameraIntrinsics,
                       views=VIEWS) -> list[np.ndarray]:
    """Views of agent ``who`` at frame ``k``; the other agents' bodies are drawn, its own is not."""
    me = agents[who]
    bodies = [Body.of(a, k) for i, a in enumerate(agents) if i != who]
    cam_pos = me.positions[k] + np.array([0.0, 0.0, CAMERA_HEIGHT])
    return [render_view(scene, bodies, (K, CameraPose(yaw_rotation(me.yaw[k] + VIEW_YAW[v]), cam_pos)),
                        K.height, K.width) for v in views]


def box_downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 box filter on an RGB8 image, rounding half up."""
    H, W = img.shape[:2]
    if H % 2 or W % 2:
        raise ValueError(f"box downsample needs even size, got {H}x{W}")
    s = img.astype(np.uint32).reshape(H // 2, 2, W // 2, 2, -1).sum(axis=(1, 3))
    return ((s + 2) // 4).astype(np.uint8)


def assemble_four_view(frames) -> np.ndarray:
    """Tile [front | rear] over [left | right] after halving each view."""
    frames = list(frames)
    if len(frames) != 4:
        raise ValueError(f"need four views, got {len(frames)}")
    if len({f.shape for f in frames}) != 1:
        raise ValueError(f"view sizes differ: {[f.shape for f in frames]}")
    q = [box_downsample2(f) for f in frames]
    return np.concatenate([np.concatenate(q[:2], axis=1), np.concatenate(q[2:], axis=1)], axis=0)
