"""Synchronized 49-frame clip pairs: clipping, dataset I/O and generation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..camera import (CameraIntrinsics, CameraTrack, format_track, parse_track,
                      pixel_ray_directions)
from .render import (VIEW_YAW, VIEWS, Body, assemble_four_view, raycast, rig_track, shade,
                     to_rgb8, yaw_rotation)
from .scene import WEATHERS, Scene, generate_scene
from .storage import (DataError, DataIOError, DimensionMismatchError, parse_svt, read_keyvalue,
                      svt_bytes)
from .trajectory import (CAMERA_HEIGHT, FEASIBLE_LAYOUTS, AgentState, InfeasiblePattern,
                         TrajectoryPattern, simulate_pair)

CLIP_FRAMES = 49
FRAME_STEP = 3  # two skipped frames between samples
CLIP_STRIDE = 49
CLIP_SPAN = FRAME_STEP * (CLIP_FRAMES - 1) + 1  # 145 source frames


@dataclass
class ClipPair:
    videos: tuple  # two uint8 [49, H, W, 3]
    tracks: tuple  # two front-camera CameraTrack, 49 frames
    pattern: int
    scene_seed: int
    traj_seed: int
    weather: int
    offset: int = 0
    views: int = 4

    @property
    def source_frames(self) -> np.ndarray:
        return self.offset + FRAME_STEP * np.arange(len(self.videos[0]))

    @property
    def grid_shape(self) -> tuple:
        return self.videos[0].shape[1:3]

    def manifest(self) -> dict:
        return {"pattern": TrajectoryPattern(self.pattern).name, "scene_seed": self.scene_seed,
                "traj_seed": self.traj_seed, "weather": self.weather,
                "frames": len(self.videos[0]), "grid_h": self.grid_shape[0],
                "grid_w": self.grid_shape[1], "views": self.views, "offset": self.offset}

    def __eq__(self, other):
        return (isinstance(other, ClipPair) and self.manifest() == other.manifest()
                and all(np.array_equal(a, b) and a.dtype == b.dtype
                        for a, b in zip(self.videos, other.videos))
                and all(a == b for a, b in zip(self.tracks, other.tracks)))


def clip_offsets(n_source: int) -> list[int]:
    if n_source < CLIP_SPAN:
        raise ValueError(f"source of {n_source} frames is shorter than one clip ({CLIP_SPAN})")
    return list(range(0, n_source - CLIP_SPAN + 1, CLIP_STRIDE))


def clip_indices(offset: int) -> np.ndarray:
    return offset + FRAME_STEP * np.arange(CLIP_FRAMES)


def clip_pairs(videos: Sequence, tracks: Sequence[CameraTrack], n_source: int | None = None,
               **meta) -> list[ClipPair]:
    """Cut both agents' source videos and tracks at identical sample indices.

    ``videos`` entries are indexable by source frame (arrays or dicts of frames).
    """
    if n_source is None:
        n_source = len(videos[0])
    clips = []
    for o in clip_offsets(n_source):
        idx = clip_indices(o)
        vids = tuple(np.stack([v[int(i)] for i in idx]) for v in videos)
        trks = tuple(t.subset(idx) for t in tracks)
        clips.append(ClipPair(vids, trks, offset=o, **meta))
    return clips


# -- rendering a simulation into clips -----------------------------------------

def render_simulation(scene: Scene, agents: Sequence[AgentState], frames, view_h: int,
                      view_w: int, four_views: bool, weathers) -> dict:
    """Render each agent at ``frames`` once and shade for every weather.

    Returns {weather: (video_agent1, video_agent2)} with dict-of-frame videos.
    Four-view mode renders each view at view resolution and tiles them at
    half size; front-only mode renders the front view at grid resolution.
    """
    K = CameraIntrinsics.from_fov(view_w, view_h)
    views = VIEWS if four_views else ("front",)
    dirs_cam = pixel_ray_directions(K, view_h, view_w).reshape(-1, 3)
    out = {w: ({}, {}) for w in weathers}
    shaded_scenes = {w: dataclasses.replace(scene, weather=w) for w in weathers}
    for who, me in enumerate(agents):
        others = [a for i, a in enumerate(agents) if i != who]
        for k in frames:
            bodies = [Body.of(a, k) for a in others]
            origin = me.positions[k] + np.array([0.0, 0.0, CAMERA_HEIGHT])
            hits = []
            for v in views:
                dirs = dirs_cam @ yaw_rotation(me.yaw[k] + VIEW_YAW[v]).T
                t, color = raycast(scene, bodies, origin, dirs)
                hits.append((t, color, np.linalg.norm(dirs, axis=1)))
            for w in weathers:
                imgs = [to_rgb8(shade(shaded_scenes[w], *h)).reshape(view_h, view_w, 3) for h in hits]
                out[w][who][int(k)] = assemble_four_view(imgs) if four_views else imgs[0]
    return out


def simulation_clips(pattern, scene_seed: int, traj_seed: int, view_h: int = 64,
                     view_w: int = 96, four_views: bool = True,
                     weathers=None) -> list[ClipPair]:
    """All clip pairs of one simulated trajectory pair, for each requested weather.

    By default the weather follows ``traj_seed % 3``.
    """
    pattern = TrajectoryPattern(pattern)
    if weathers is None:
        weathers = (traj_seed % len(WEATHERS),)
    scene = generate_scene(scene_seed, 0)
    agents = simulate_pair(pattern, scene, traj_seed)
    n = len(agents[0])
    offsets = clip_offsets(n)
    needed = sorted({int(i) for o in offsets for i in clip_indices(o)})
    rendered = render_simulation(scene, agents, needed, view_h, view_w, four_views, weathers)
    K = CameraIntrinsics.from_fov(view_w, view_h)
    tracks = [rig_track(a, "front", K) for a in agents]
    clips = []
    for w in weathers:
        clips += clip_pairs(rendered[w], tracks, n_source=n, pattern=int(pattern),
                            scene_seed=scene_seed, traj_seed=traj_seed, weather=w,
                            views=4 if four_views else 1)
    return clips


def plan_simulations(seed: int):
    """Endless deterministic stream of (pattern, scene_seed, traj_seed base)."""
    i = 0
    patterns = list(TrajectoryPattern)
    while True:
        scene_seed = int(seed) * 100_003 + i
        layout = generate_scene(scene_seed, 0).layout
        for step in range(len(patterns)):
            p = patterns[(i + step) % len(patterns)]
            if layout in FEASIBLE_LAYOUTS[p]:
                break
        yield p, scene_seed, 3 * scene_seed
        i += 1


def generate_clips(n_pairs: int, seed: int, view_h: int = 64, view_w: int = 96,
                   four_views: bool = True, progress=None) -> list[ClipPair]:
    """First ``n_pairs`` clips of the plan for ``seed``.

    Each simulation is rendered under the three weather presets, which are
    the three repeats of its jittered trajectory (trajectory seeds 3k..3k+2).
    """
    clips: list[ClipPair] = []
    for pattern, scene_seed, base in plan_simulations(seed):
        if len(clips) >= n_pairs:
            break
        weathers = tuple(range(len(WEATHERS)))
        try:
            batch = simulation_clips(pattern, scene_seed, base, view_h, view_w, four_views,
                                     weathers)
        except InfeasiblePattern:
            continue
        for c in batch:
            c.traj_seed = base + c.weather
        clips += batch
        if progress is not None:
            progress(f"gen-data simulated {pattern.name} scene={scene_seed} "
                     f"clips={min(len(clips), n_pairs)}/{n_pairs}")
    return clips[:n_pairs]


# -- dataset directory ------------------------------------------------------------

def clip_dir_name(i: int) -> str:
    return f"clip_{i:05d}"


def write_clip(clip: ClipPair, d) -> None:
    d = Path(d)
    try:
        d.mkdir(parents=True, exist_ok=True)
        (d / "manifest.txt").write_text(
            "".join(f"{k}={v}\n" for k, v in clip.manifest().items()), encoding="utf-8")
        for k in (1, 2):
            (d / f"agent{k}_video.svt").write_bytes(svt_bytes(clip.videos[k - 1]))
            (d / f"agent{k}_track.txt").write_text(format_track(clip.tracks[k - 1]),
                                                   encoding="ascii")
    except OSError as e:
        raise DataIOError(f"cannot write clip to {d}: {e}") from e


def read_clip(d) -> ClipPair:
    d = Path(d)
    m = read_keyvalue(d / "manifest.txt")
    try:
        frames, gh, gw = int(m["frames"]), int(m["grid_h"]), int(m["grid_w"])
        pattern = TrajectoryPattern[m["pattern"]]
    except (KeyError, ValueError) as e:
        raise DataError(f"{d}/manifest.txt: bad or missing key {e}") from e
    videos, tracks = [], []
    for k in (1, 2):
        path = d / f"agent{k}_video.svt"
        try:
            buf = path.read_bytes()
            text = (d / f"agent{k}_track.txt").read_text(encoding="ascii")
        except OSError as e:
            raise DataIOError(f"cannot read {d}: {e}") from e
        v = parse_svt(buf, str(path))
        if v.shape != (frames, gh, gw, 3) or v.dtype != np.uint8:
            raise DimensionMismatchError(
                f"{path}: expected uint8 {(frames, gh, gw, 3)}, found {v.dtype} {v.shape}")
        try:
            t = parse_track(text)
        except ValueError as e:
            raise DataError(f"{d}/agent{k}_track.txt: {e}") from e
        if len(t) != frames:
            raise DimensionMismatchError(
                f"{d}/agent{k}_track.txt: expected {frames} poses, found {len(t)}")
        videos.append(v)
        tracks.append(t)
    return ClipPair(tuple(videos), tuple(tracks), int(pattern), int(m["scene_seed"]),
                    int(m["traj_seed"]), int(m["weather"]), int(m.get("offset", 0)),
                    int(m.get("views", 4)))


def write_dataset(clips: Sequence[ClipPair], root) -> None:
    root = Path(root)
    for i, c in enumerate(clips):
        write_clip(c, root / clip_dir_name(i))


def list_clip_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DataIOError(f"dataset root {root} is not a directory")
    return sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("clip_"))


def read_dataset(root) -> list[ClipPair]:
    return [read_clip(d) for d in list_clip_dirs(root)]
