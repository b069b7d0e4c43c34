"""Experiment configuration: ``key=value`` files with a fixed key schema."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    return parse


# key -> (parser, default). Desk-scale defaults.
SCHEMA = {
    "model.blocks": (int, 4),
    "model.dim": (int, 128),
    "model.heads": (int, 4),
    "model.head_dim": (int, 32),
    "latent.spatial_factor": (int, 8),
    "latent.temporal_factor": (int, 4),
    "latent.channels": (int, 128),
    "latent.vae_mode": (_choice("invertible-patchify", "orthonormal-projection"),
                        "orthonormal-projection"),
    "diffusion.steps": (int, 1000),
    "diffusion.schedule": (_choice("linear", "cosine"), "linear"),
    "data.frames": (int, 9),
    "data.view_h": (int, 64),
    "data.view_w": (int, 96),
    "train.lr": (float, 1e-3),
    "train.batch": (int, 2),
    "train.steps": (int, 1000),
    "train.seed": (int, 0),
    "train.dtype": (_choice("float32", "float64"), "float32"),
    "ablate.four_views": (_bool, True),
    "ablate.raymap_mode": (_choice("raymap", "raw_values", "off"), "raymap"),
    "ablate.cross_agent": (_bool, True),
    "eval.steps": (int, 50),
    "eval.seed": (int, 0),
    "eval.red_ratio": (float, 1.5),
    "eval.red_min": (float, 80.0),
}

# keys that may differ between a checkpoint and the config used to resume it
RESUMABLE_KEYS = {"train.steps"}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ModelConfig:
    n_blocks: int = 4
    c: int = 128
    n_heads: int = 4
    head_dim: int = 32
    s_sp: int = 8
    s_t: int = 4
    latent_c: int = 128
    vae_mode: str = "orthonormal-projection"
    diffusion_steps: int = 1000
    schedule: str = "linear"
    raymap_mode: str = "raymap"
    cross_agent: bool = True

    def __post_init__(self):
        if self.n_blocks < 2 or self.n_blocks % 2:
            raise ConfigError(f"model.blocks must be even and >= 2, got {self.n_blocks}")
        if self.c != self.n_heads * self.head_dim:
            raise ConfigError(f"model.dim {self.c} != model.heads {self.n_heads} x "
                              f"model.head_dim {self.head_dim}")
        if self.head_dim % 2 or self.head_dim < 6:
            raise ConfigError(f"model.head_dim must be even and >= 6 for 3-axis rotary "
                              f"bands, got {self.head_dim}")
        if self.diffusion_steps < 1:
            raise ConfigError("diffusion.steps must be >= 1")
        if self.s_sp < 1 or self.s_t < 1 or self.latent_c < 1:
            raise ConfigError("latent factors and channels must be positive")
        if self.raymap_mode not in ("raymap", "raw_values", "off"):
            raise ConfigError(f"unknown raymap mode {self.raymap_mode!r}")

    @property
    def cond_channels(self) -> int:
        return 2 * self.latent_c + 1

    @property
    def ray_channels(self) -> int:
        return 6 * self.s_t


class Config:
    """All experiment settings; ``values`` maps every schema key to a parsed value."""

    def __init__(self, values: dict | None = None):
        self.values = {k: d for k, (_, d) in SCHEMA.items()}
        for k, v in (values or {}).items():
            self.set(k, v)
        self.model  # validate eagerly

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(value if isinstance(value, str) else format_value(value))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {e}") from None

    def __getitem__(self, key: str):
        return self.values[key]

    def with_values(self, mapping: dict) -> "Config":
        vals = dict(self.values)
        vals.update(mapping)
        return Config(vals)

    @property
    def model(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            n_blocks=v["model.blocks"], c=v["model.dim"], n_heads=v["model.heads"],
            head_dim=v["model.head_dim"], s_sp=v["latent.spatial_factor"],
            s_t=v["latent.temporal_factor"], latent_c=v["latent.channels"],
            vae_mode=v["latent.vae_mode"], diffusion_steps=v["diffusion.steps"],
            schedule=v["diffusion.schedule"], raymap_mode=v["ablate.raymap_mode"],
            cross_agent=v["ablate.cross_agent"])

    @property
    def grid_shape(self) -> tuple:
        return self.values["data.view_h"], self.values["data.view_w"]

    def to_text(self) -> str:
        return "".join(f"{k}={format_value(v)}\n" for k, v in sorted(self.values.items()))

    def diff(self, other: "Config", ignore=()) -> list[str]:
        return [k for k in sorted(SCHEMA) if k not in ignore and self.values[k] != other.values[k]]

    def __eq__(self, other):
        return isinstance(other, Config) and self.values == other.values

    def __repr__(self):
        return f"Config({self.values!r})"


def parse_config(text: str, source: str = "<config>") -> Config:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in SCHEMA:
            raise ConfigError(f"{source}:{n}: unknown config key {k!r}")
        if k in values:
            raise ConfigError(f"{source}:{n}: duplicate key {k!r}")
        values[k] = v
    return Config(values)


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, str(path))
