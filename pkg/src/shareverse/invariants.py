"""Self-checks behind the ``gradcheck`` and ``invariants`` subcommands."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .autodiff import (Tensor, backward, concat, finite_diff_check, no_trace, permute, reshape,
                       split, trace)
from .camera import (CameraIntrinsics, CameraTrack, build_raymap_frames, mean_normalize,
                     pack_raymap, pixel_ray_directions)
from .config import ModelConfig
from .evaluation import psnr, ssim
from .model.blocks import cross_agent_block, dit_block, timestep_embed
from .model.denoiser import AgentInputs, base_forward, denoiser_forward, init_params, pair_loss
from .model.rope import apply_rope, grid_positions, rope_angles
from .model.schedule import noise_schedule
from .model.vae import PatchVAE
from .world.clips import ClipPair, read_clip, write_clip
from .world.scene import generate_scene

GRADCHECK_CONFIG = ModelConfig(n_blocks=2, c=16, n_heads=2, head_dim=8, latent_c=8)
GRADCHECK_GRID = (2, 2, 2)
SEEDS = range(20)


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_track(rng, n: int = 5, H: int = 16, W: int = 24) -> CameraTrack:
    K = CameraIntrinsics(float(rng.uniform(10, 30)), float(rng.uniform(10, 30)),
                         float(rng.uniform(4, W - 4)), float(rng.uniform(4, H - 4)), W, H)
    return CameraTrack([K], np.stack([random_rotation(rng) for _ in range(n)]),
                       rng.uniform(-20, 20, size=(n, 3)))


def random_agents(rng, cfg: ModelConfig, grid, batch: int = 1, dtype=np.float64) -> tuple:
    f, h, w = grid
    out = []
    for _ in range(2):
        cam = None
        if cfg.raymap_mode == "raymap":
            cam = rng.standard_normal((batch, f, h, w, cfg.ray_channels)).astype(dtype)
        elif cfg.raymap_mode == "raw_values":
            cam = rng.standard_normal((batch, f, 16 * cfg.s_t)).astype(dtype)
        out.append(AgentInputs(rng.standard_normal((batch, f, h, w, cfg.latent_c)).astype(dtype),
                               rng.standard_normal((batch, h, w, cfg.latent_c)).astype(dtype),
                               cam))
    return tuple(out)


def randomize_zero_params(params, seed: int, scale: float = 0.1):
    """Give every all-zero parameter random values so that no path is dead."""
    rng = np.random.default_rng([seed, 0x2E40])
    for name in params:
        p = params[name]
        if not np.any(p.data):
            params[name] = Tensor(rng.standard_normal(p.shape) * scale, dtype=p.dtype)
    return params


def model_gradcheck(tolerance: float = 1e-4, seed: int = 0, cfg: ModelConfig = GRADCHECK_CONFIG,
                    progress=None):
    """Finite-difference check of the full two-agent loss in float64."""
    rng = np.random.default_rng([seed, 0x6C])
    params = randomize_zero_params(init_params(cfg, seed, np.float64), seed)
    agents = random_agents(rng, cfg, GRADCHECK_GRID)
    targets = tuple(rng.standard_normal(a.x_t.shape) for a in agents)
    t = np.array([int(rng.integers(1, cfg.diffusion_steps + 1))])

    def loss_fn(p):
        return pair_loss(denoiser_forward(p, cfg, agents, t), targets)

    return finite_diff_check(loss_fn, params, tolerance, progress=progress)


# -- individual invariants ------------------------------------------------------------

def inv_shape_roundtrips():
    for s in SEEDS:
        rng = np.random.default_rng(s)
        a, b = (Tensor(rng.standard_normal((2, 3, 4)), dtype=np.float64) for _ in range(2))
        x, y = split(concat([a, b], axis=1), 2, axis=1)
        assert np.array_equal(x.data, a.data) and np.array_equal(y.data, b.data)
        assert np.array_equal(reshape(reshape(a, (6, 4)), (2, 3, 4)).data, a.data)
        assert np.array_equal(permute(permute(a, (2, 0, 1)), (1, 2, 0)).data, a.data)


def inv_trace_transparent():
    cfg = GRADCHECK_CONFIG
    params = randomize_zero_params(init_params(cfg, 1, np.float64), 1)
    agents = random_agents(np.random.default_rng(1), cfg, GRADCHECK_GRID)
    with no_trace():
        off = denoiser_forward(params, cfg, agents, [5])
    with trace():
        on = denoiser_forward(params, cfg, agents, [5])
    assert all(np.array_equal(a.data, b.data) for a, b in zip(off, on))


def inv_raymap_geometry():
    for s in SEEDS:
        rng = np.random.default_rng([s, 1])
        track = random_track(rng)
        d = pixel_ray_directions(track.intrinsics[0], track.height, track.width)
        assert np.all(d[..., 2] == 1.0), "pre-rotation ray z must be exactly 1"
        other = random_track(rng)
        normed = mean_normalize([track, other])
        c = np.concatenate([t.translations for t in normed]).mean(axis=0)
        assert np.abs(c).max() < 1e-9, "normalized centroid is not zero"
        again = mean_normalize(normed)
        assert all(np.allclose(a.translations, b.translations, atol=1e-12, rtol=0)
                   for a, b in zip(again, normed)), "mean_normalize is not idempotent"
        Rg, dv = random_rotation(rng), rng.uniform(-5, 5, 3)
        moved = CameraTrack(track.intrinsics, Rg @ track.rotations,
                            track.translations @ Rg.T + dv)
        r0, r1 = build_raymap_frames(track), build_raymap_frames(moved)
        assert np.abs(r0[..., :3] @ Rg.T - r1[..., :3]).max() < 1e-6
        assert np.abs(r0[..., 3:] @ Rg.T + dv - r1[..., 3:]).max() < 1e-6
        frames = rng.standard_normal((5, 16, 24, 6))
        assert np.allclose(pack_raymap(3.0 * frames, 8, 4), 3.0 * pack_raymap(frames, 8, 4),
                           atol=1e-12)


def inv_schedule():
    for kind in ("linear", "cosine"):
        s = noise_schedule(1000, kind)
        assert np.abs(s.alpha ** 2 + s.sigma ** 2 - 1.0).max() < 1e-12
        assert np.all(np.diff(s.alpha_bar) < 0), f"{kind} alpha_bar not strictly decreasing"


def inv_rope():
    for s in SEEDS:
        rng = np.random.default_rng([s, 2])
        hd = 12
        pos = rng.integers(0, 10, size=(2, 3))
        q, k = rng.standard_normal((2, hd))
        ang = rope_angles(pos, hd)
        rq = apply_rope(Tensor(np.stack([q, q])[None, None], dtype=np.float64), ang).data[0, 0]
        rk = apply_rope(Tensor(np.stack([k, k])[None, None], dtype=np.float64), ang).data[0, 0]
        assert np.allclose(np.linalg.norm(rq, axis=1), np.linalg.norm(q), atol=1e-12)
        ang2 = rope_angles(pos + np.array([5, 2, 3]), hd)
        sq = apply_rope(Tensor(np.stack([q, q])[None, None], dtype=np.float64), ang2).data[0, 0]
        sk = apply_rope(Tensor(np.stack([k, k])[None, None], dtype=np.float64), ang2).data[0, 0]
        assert abs(rq[0] @ rk[1] - sq[0] @ sk[1]) < 1e-9, "rope score depends on absolute position"


def inv_zero_init_transparency():
    cfg = ModelConfig(n_blocks=2, c=16, n_heads=2, head_dim=8, latent_c=8)
    for s in range(3):
        rng = np.random.default_rng([s, 3])
        params = init_params(cfg, s, np.float64)
        agents = random_agents(rng, cfg, (2, 2, 3), batch=2)
        t = rng.integers(1, 1000, size=2)
        with no_trace():
            e1, e2 = denoiser_forward(params, cfg, agents, t)
            b1 = base_forward(params, cfg, agents[0], t)
            b2 = base_forward(params, cfg, agents[1], t)
            bumped = (agents[0], AgentInputs(agents[1].x_t + 1.0, agents[1].first,
                                             agents[1].camera))
            p1, _ = denoiser_forward(params, cfg, bumped, t)
        assert np.array_equal(e1.data, b1.data) and np.array_equal(e2.data, b2.data)
        assert np.array_equal(p1.data, e1.data)


def inv_cross_agent_off_independent():
    cfg = ModelConfig(n_blocks=2, c=16, n_heads=2, head_dim=8, latent_c=8, cross_agent=False)
    params = randomize_zero_params(init_params(cfg, 4, np.float64), 4)
    rng = np.random.default_rng(4)
    agents = random_agents(rng, cfg, (2, 2, 2))
    bumped = (agents[0], AgentInputs(agents[1].x_t * 2.0, agents[1].first + 1.0,
                                     agents[1].camera - 1.0))
    with no_trace():
        a, _ = denoiser_forward(params, cfg, agents, [10])
        b, _ = denoiser_forward(params, cfg, bumped, [10])
    assert np.array_equal(a.data, b.data)


def inv_rope_agent_offsets():
    cfg = GRADCHECK_CONFIG
    params = randomize_zero_params(init_params(cfg, 5, np.float64), 5)
    rng = np.random.default_rng(5)
    f, h, w = 2, 2, 2
    x1, x2 = (Tensor(rng.standard_normal((1, f * h * w, cfg.c)), dtype=np.float64)
              for _ in range(2))
    with no_trace():
        temb = timestep_embed(params, [3], cfg.c, np.float64)
        ang = lambda o1, o2: rope_angles(np.concatenate(  # noqa: E731
            [grid_positions(f, h, w, o1), grid_positions(f, h, w, o2)]), cfg.head_dim)
        a = cross_agent_block(params, 0, x1, x2, temb, ang(0, f), cfg.n_heads)
        b = cross_agent_block(params, 0, x1, x2, temb, ang(f, 0), cfg.n_heads)
        own = rope_angles(grid_positions(f, h, w), cfg.head_dim)
        d = dit_block(params, 0, x1, temb, own, cfg.n_heads)
    assert not np.array_equal(a[0].data, b[0].data), "agent frame offsets are not distinguishable"
    with no_trace():
        d2 = dit_block(params, 0, x1, temb, own, cfg.n_heads)
    assert np.array_equal(d.data, d2.data)


def inv_vae():
    rng = np.random.default_rng(6)
    v = rng.uniform(-1, 1, size=(9, 16, 24, 3))
    inv = PatchVAE(8, 4)
    assert np.array_equal(inv.decode(inv.encode(v)), v)
    proj = PatchVAE(8, 4, 128, "orthonormal-projection")
    z = rng.standard_normal((3, 2, 3, 128))
    assert np.abs(proj.encode(proj.decode(z)) - z).max() < 1e-5


def inv_metrics_symmetric():
    rng = np.random.default_rng(7)
    a, b = (rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8) for _ in range(2))
    assert abs(psnr(a, b) - psnr(b, a)) < 1e-9 and abs(ssim(a, b) - ssim(b, a)) < 1e-9
    assert psnr(a, a) == 99.0 and ssim(a, a) == 1.0


def inv_world_determinism():
    a, b = generate_scene(11, 0), generate_scene(11, 0)
    assert a.serialize() == b.serialize()
    assert generate_scene(11, 2).geometry() == a.geometry()


def inv_dataset_roundtrip():
    rng = np.random.default_rng(8)
    tracks = tuple(random_track(rng, n=49) for _ in range(2))
    vids = tuple(rng.integers(0, 256, size=(49, 16, 24, 3), dtype=np.uint8) for _ in range(2))
    clip = ClipPair(vids, tracks, 0, 1, 3, 0)
    with tempfile.TemporaryDirectory() as d:
        write_clip(clip, Path(d) / "clip_00000")
        assert read_clip(Path(d) / "clip_00000") == clip


INVARIANTS = {
    "tensor.shape_roundtrips": inv_shape_roundtrips,
    "tensor.trace_transparent": inv_trace_transparent,
    "raymap.geometry": inv_raymap_geometry,
    "schedule.variance_preserving": inv_schedule,
    "rope.norm_and_relative": inv_rope,
    "model.zero_init_transparency": inv_zero_init_transparency,
    "model.cross_agent_off_independent": inv_cross_agent_off_independent,
    "model.rope_agent_offsets": inv_rope_agent_offsets,
    "vae.invertibility": inv_vae,
    "metrics.symmetric": inv_metrics_symmetric,
    "world.determinism": inv_world_determinism,
    "world.dataset_roundtrip": inv_dataset_roundtrip,
}


def run_invariants(progress=None) -> dict:
    """name -> None on success or an error message."""
    results = {}
    for name, fn in INVARIANTS.items():
        try:
            fn()
            results[name] = None
        except Exception as e:  # report every failure kind, keep going
            results[name] = f"{type(e).__name__}: {e}"
        if progress is not None:
            progress(f"invariant {name}: {'ok' if results[name] is None else 'FAIL'}")
    return results
