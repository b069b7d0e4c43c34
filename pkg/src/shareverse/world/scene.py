"""Procedural city blocks: a road layout, building boxes and a weather preset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROAD_HALF_WIDTH = 5.0
ROAD_EXTENT = 150.0
CLEARANCE = 2.0
LANE_OFFSET = 2.0
# junction layouts keep a building-free square so crossing agents see each other
PLAZA_HALF = 45.0

LAYOUTS = ("crossroads", "tjunction", "straight")


@dataclass(frozen=True)
class Weather:
    sky: tuple
    tint: tuple
    fog_density: float


# clear noon, overcast drizzle, hazy dusk
WEATHERS = {
    0: Weather((135, 190, 235), (1.0, 1.0, 1.0), 0.004),
    1: Weather((150, 156, 166), (0.78, 0.80, 0.86), 0.012),
    2: Weather((236, 176, 128), (1.0, 0.86, 0.72), 0.008),
}

BUILDING_PALETTE = (
    (170, 170, 175), (120, 125, 135), (200, 190, 170), (90, 110, 140),
    (150, 160, 120), (210, 205, 195), (80, 90, 95), (175, 160, 140),
)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    color: tuple

    def __post_init__(self):
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box must have positive extent on every axis: {self.lo} {self.hi}")


@dataclass(frozen=True)
class Road:
    """Axis-aligned paved rectangle on the ground plane."""

    x0: float
    x1: float
    y0: float
    y1: float


@dataclass(frozen=True)
class Scene:
    ground_color: tuple
    boxes: tuple = ()
    weather: int = 0
    seed: int = 0
    layout: str = "crossroads"
    roads: tuple = field(default=())

    @property
    def preset(self) -> Weather:
        return WEATHERS[self.weather]

    @property
    def sky_color(self) -> tuple:
        return self.preset.sky

    @property
    def tint(self) -> tuple:
        return self.preset.tint

    @property
    def fog_density(self) -> float:
        return self.preset.fog_density

    @property
    def road_color(self) -> tuple:
        return tuple(int(c * 0.55) for c in self.ground_color)

    def serialize(self) -> bytes:
        """Canonical text form; used for equality and determinism checks."""
        lines = [f"layout={self.layout}", f"weather={self.weather}",
                 f"ground={self.ground_color}", f"sky={self.sky_color}", f"tint={self.tint}",
                 f"fog={self.fog_density!r}"]
        lines += [f"road={r.x0!r},{r.x1!r},{r.y0!r},{r.y1!r}" for r in self.roads]
        lines += [f"box={b.lo!r},{b.hi!r},{b.color}" for b in self.boxes]
        return "\n".join(lines).encode()

    def geometry(self) -> tuple:
        return self.layout, self.roads, tuple((b.lo, b.hi) for b in self.boxes)


def layout_roads(layout: str) -> tuple:
    w, L = ROAD_HALF_WIDTH, ROAD_EXTENT
    main = Road(-L, L, -w, w)
    if layout == "straight":
        return (main,)
    if layout == "tjunction":
        return (main, Road(-w, w, -L, w))
    if layout == "crossroads":
        return (main, Road(-w, w, -L, L))
    raise ValueError(f"unknown layout {layout!r}")


def _footprint_clear(x0, x1, y0, y1, roads) -> bool:
    c = CLEARANCE
    for r in roads:
        if x0 < r.x1 + c and x1 > r.x0 - c and y0 < r.y1 + c and y1 > r.y0 - c:
            return False
    return True


def generate_scene(seed: int, weather: int = 0) -> Scene:
    """Deterministic scene for ``seed``; ``weather`` only changes colors and fog."""
    if weather not in WEATHERS:
        raise ValueError(f"weather must be one of {sorted(WEATHERS)}, got {weather}")
    rng = np.random.default_rng([int(seed), 0x5CE7E])
    layout = LAYOUTS[int(rng.choice(3, p=[0.5, 0.3, 0.2]))]
    roads = layout_roads(layout)
    g = int(rng.integers(95, 125))
    ground = (g, g + int(rng.integers(0, 12)), g - int(rng.integers(0, 15)))
    n_boxes = int(rng.integers(10, 25))
    boxes = []
    attempts = 0
    while len(boxes) < n_boxes:
        attempts += 1
        if attempts > 10000:
            raise RuntimeError("could not place scene boxes")
        cx, cy = rng.uniform(-120.0, 120.0, size=2)
        sx, sy = rng.uniform(5.0, 20.0, size=2)
        tall = rng.random() < 0.3
        height = rng.uniform(20.0, 50.0) if tall else rng.uniform(4.0, 12.0)
        x0, x1, y0, y1 = cx - sx / 2, cx + sx / 2, cy - sy / 2, cy + sy / 2
        if not _footprint_clear(x0, x1, y0, y1, roads):
            continue
        if layout != "straight" and x0 < PLAZA_HALF and x1 > -PLAZA_HALF \
                and y0 < PLAZA_HALF and y1 > -PLAZA_HALF:
            continue
        color = BUILDING_PALETTE[int(rng.integers(len(BUILDING_PALETTE)))]
        boxes.append(Box((float(x0), float(y0), 0.0), (float(x1), float(y1), float(height)), color))
    return Scene(ground, tuple(boxes), weather, int(seed), layout, roads)
