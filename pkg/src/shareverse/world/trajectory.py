"""Paired agent trajectories for the six interaction patterns.

Coordinates: world x east, y north, z up; traffic keeps right, so a lane is
offset by ``LANE_OFFSET`` to the right of its travel direction. One source
frame is one simulation tick.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .scene import LANE_OFFSET, Scene

V_MAX = 1.0  # meters per frame
BODY_EXTENTS = (4.2, 1.8, 1.4)
BODY_COLOR = (200, 24, 20)
MIN_VISIBLE_RUN = 20
FRUSTUM_NEAR = 0.5
FRUSTUM_FAR = 60.0
CAMERA_HEIGHT = 1.5
# default 2:3 view aspect with 90 degree horizontal FOV
TAN_HALF_HFOV = 1.0
TAN_HALF_VFOV = 2.0 / 3.0


class InfeasiblePattern(ValueError):
    """The pattern cannot be driven on the scene's road layout."""


class TrajectoryPattern(enum.IntEnum):
    StraightMeeting = 0
    HeadOnPass = 1
    PerpendicularCross = 2
    TJunctionTurnMeeting = 3
    Following = 4
    TurningMeeting = 5


FEASIBLE_LAYOUTS = {
    TrajectoryPattern.StraightMeeting: {"straight", "tjunction", "crossroads"},
    TrajectoryPattern.HeadOnPass: {"straight", "tjunction", "crossroads"},
    TrajectoryPattern.Following: {"straight", "tjunction", "crossroads"},
    TrajectoryPattern.PerpendicularCross: {"crossroads"},
    TrajectoryPattern.TJunctionTurnMeeting: {"tjunction", "crossroads"},
    TrajectoryPattern.TurningMeeting: {"tjunction", "crossroads"},
}


@dataclass
class AgentState:
    """Per-frame ground position (x, y, 0) and body yaw of one vehicle."""

    positions: np.ndarray
    yaw: np.ndarray
    extents: tuple = BODY_EXTENTS
    color: tuple = BODY_COLOR

    def __len__(self):
        return len(self.yaw)

    def body_center(self, k: int) -> np.ndarray:
        return self.positions[k] + np.array([0.0, 0.0, self.extents[2] / 2.0])

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)


class Path:
    """Planar curve sampled densely and addressed by arc length."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
        self.points = pts[keep]
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def at(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Positions [N, 2] and tangent headings [N] at arc lengths ``s``."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        x = np.interp(s, self.s, self.points[:, 0])
        y = np.interp(s, self.s, self.points[:, 1])
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.points) - 2)
        d = self.points[idx + 1] - self.points[idx]
        return np.stack([x, y], axis=1), np.arctan2(d[:, 1], d[:, 0])


def _line(a, b, step=0.05) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(2, int(np.ceil(np.linalg.norm(b - a) / step)) + 1)
    return a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)


def _arc(center, radius, theta0, theta1, step=0.05) -> np.ndarray:
    n = max(2, int(np.ceil(abs(theta1 - theta0) * radius / step)) + 1)
    th = np.linspace(theta0, theta1, n)
    return np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)


def _lane_change(a, b, step=0.05) -> np.ndarray:
    """Smooth cosine S-curve between two points on parallel lanes along x."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(2, int(np.ceil(np.linalg.norm(b - a) / step)) + 1)
    u = np.linspace(0.0, 1.0, n)
    x = a[0] + u * (b[0] - a[0])
    y = a[1] + (b[1] - a[1]) * (1 - np.cos(np.pi * u)) / 2
    return np.stack([x, y], axis=1)


def _chain(*parts) -> Path:
    return Path(np.concatenate(parts))


def _drive(path: Path, s0: float, s1: float, n: int, reverse: bool = False,
           gap_wobble: np.ndarray | None = None) -> AgentState:
    s = np.linspace(s0, s1, n)
    if gap_wobble is not None:
        s = s + gap_wobble
    xy, heading = path.at(s)
    if reverse:
        heading = heading + np.pi
    heading = np.arctan2(np.sin(heading), np.cos(heading))
    pos = np.concatenate([xy, np.zeros((n, 1))], axis=1)
    return AgentState(pos, heading)


def _source_length(rng) -> int:
    return int(rng.integers(240, 261))


def _jitter(rng, scale=4.0) -> float:
    return float(rng.uniform(-scale, scale))


def simulate_pair(pattern, scene: Scene, seed: int) -> tuple[AgentState, AgentState]:
    """Drive both agents through ``pattern`` on ``scene``'s roads.

    Start/end points are jittered from ``seed // 3``: the three seeds 3k, 3k+1
    and 3k+2 repeat one transformed trajectory.
    """
    pattern = TrajectoryPattern(pattern)
    if scene.layout not in FEASIBLE_LAYOUTS[pattern]:
        raise InfeasiblePattern(f"{pattern.name} is not drivable on a {scene.layout} layout")
    rng = np.random.default_rng([int(seed) // 3, int(pattern), 0x7A1])
    n = _source_length(rng)
    lo = LANE_OFFSET
    j = lambda scale=4.0: _jitter(rng, scale)  # noqa: E731

    if pattern == TrajectoryPattern.StraightMeeting:
        pa = Path(_line((-140, -lo), (140, -lo)))
        pb = Path(_line((140, lo), (-140, lo)))
        a = _drive(pa, 65 + j(), 215 + j(), n)
        b = _drive(pb, 65 + j(), 215 + j(), n)
    elif pattern == TrajectoryPattern.HeadOnPass:
        pa = Path(_line((-140, -lo), (140, -lo)))
        pb = _chain(_line((140, -lo), (30, -lo)), _lane_change((30, -lo), (10, lo)),
                    _line((10, lo), (-140, lo)))
        a = _drive(pa, 65 + j(), 215 + j(), n)
        b = _drive(pb, 65 + j(), 215 + j(), n)
    elif pattern == TrajectoryPattern.PerpendicularCross:
        pa = Path(_line((-140, -lo), (140, -lo)))
        pb = Path(_line((lo, -140), (lo, 140)))
        a = _drive(pa, 40 + j(2), 40 + 0.8 * (n - 1) + j(2), n)
        b = _drive(pb, 90 + j(2), 90 + 0.25 * (n - 1) + j(2), n)
    elif pattern == TrajectoryPattern.TJunctionTurnMeeting:
        r = 4.0
        pa = Path(_line((140, lo), (-140, lo)))
        pb = _chain(_line((lo, -140), (lo, -lo - r)),
                    _arc((lo + r, -lo - r), r, np.pi, np.pi / 2),
                    _line((lo + r, -lo), (140, -lo)))
        a = _drive(pa, 10 + j(), 180 + j(), n)
        b = _drive(pb, 80 + j(), 214 + j(), n)
    elif pattern == TrajectoryPattern.Following:
        gap = 14.0 + j(2)
        path = Path(_line((-140, -lo), (140, -lo)))
        start = 80 + j()
        run = 0.45 * (n - 1)
        k = np.arange(n)
        wobble = 0.08 * gap * np.sin(2 * np.pi * k / n * rng.uniform(1.0, 2.0))
        b = _drive(path, start, start + run, n)
        a = _drive(path, start + gap, start + gap + run, n, reverse=True, gap_wobble=wobble)
    else:  # TurningMeeting
        ra, rb = 8.0, 4.0
        pa = _chain(_line((lo, -140), (lo, -lo - ra + 4.0)),
                    _arc((lo - ra, -lo - ra + 4.0), ra, 0.0, np.pi / 2),
                    _line((lo - ra, lo), (-140, lo)))
        pb = _chain(_line((-140, -lo), (-lo - rb, -lo)),
                    _arc((-lo - rb, -lo - rb), rb, np.pi / 2, 0.0),
                    _line((-lo, -lo - rb), (-lo, -140)))
        a = _drive(pa, 110 + j(2), 110 + 0.5 * (n - 1) + j(2), n)
        b = _drive(pb, 30 + j(2), 30 + 0.5 * (n - 1) + j(2), n)

    for agent in (a, b):
        if agent.speeds().max() > V_MAX + 1e-9:
            raise InfeasiblePattern(f"{pattern.name}: speed cap exceeded")
    runs = (longest_visible_run(a, b), longest_visible_run(b, a))
    if min(runs) < MIN_VISIBLE_RUN:
        raise InfeasiblePattern(
            f"{pattern.name} seed {seed}: mutual front visibility runs {runs} < {MIN_VISIBLE_RUN}")
    return a, b


def front_axes(yaw: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)


def in_front_frustum(observer: AgentState, target: AgentState) -> np.ndarray:
    """Per-frame flag: target's body center inside observer's front-camera frustum."""
    cam = observer.positions + np.array([0.0, 0.0, CAMERA_HEIGHT])
    p = target.positions + np.array([0.0, 0.0, target.extents[2] / 2.0]) - cam
    fwd = front_axes(observer.yaw)
    right = np.stack([np.sin(observer.yaw), -np.cos(observer.yaw), np.zeros_like(observer.yaw)], -1)
    z = (p * fwd).sum(-1)
    x = (p * right).sum(-1)
    y = -p[:, 2]
    return ((z > FRUSTUM_NEAR) & (z < FRUSTUM_FAR) & (np.abs(x) <= z * TAN_HALF_HFOV)
            & (np.abs(y) <= z * TAN_HALF_VFOV))


def longest_run(flags) -> int:
    best = cur = 0
    for f in flags:
        cur = cur + 1 if f else 0
        best = max(best, cur)
    return best


def longest_visible_run(observer: AgentState, target: AgentState) -> int:
    return longest_run(in_front_frustum(observer, target))
