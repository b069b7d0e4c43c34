import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shareverse.camera import CameraIntrinsics, CameraTrack
from shareverse.config import Config
from shareverse.evaluation import (EvalReport, front_view, paired_eval, position_probe,
                                   probe_summary, psnr, quadrants, red_centroid, ssim)
from shareverse.model.denoiser import init_params
from shareverse.training import prepare_clip
from shareverse.world.trajectory import BODY_EXTENTS, CAMERA_HEIGHT

seeds = st.integers(0, 2 ** 32 - 1)
C1, C2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2


# -- psnr ---------------------------------------------------------------------------------------

def test_psnr_examples():
    a = np.random.default_rng(0).integers(0, 255, (16, 16, 3), dtype=np.uint8)
    assert psnr(a, a) == 99.0
    assert psnr(np.zeros((4, 4, 3), np.uint8), np.full((4, 4, 3), 255, np.uint8)) == 0.0
    assert abs(psnr(a, a + 1) - 48.1308036) < 1e-6
    assert abs(psnr(a, a + 1) - 10 * math.log10(255 ** 2)) < 1e-12
    with pytest.raises(ValueError):
        psnr(a, a[:8])


# -- ssim ---------------------------------------------------------------------------------------

def test_ssim_identity_and_errors():
    a = np.random.default_rng(1).integers(0, 256, (20, 24, 3), dtype=np.uint8)
    assert ssim(a, a) == 1.0
    with pytest.raises(ValueError):
        ssim(a[:10], a[:10])
    with pytest.raises(ValueError):
        ssim(a, a[:, :12])


@pytest.mark.parametrize("c", [0, 37, 128, 240])
def test_ssim_constant_closed_form(c):
    a = np.full((16, 16, 3), c, np.uint8)
    b = a + 10
    ref = (2 * c * (c + 10) + C1) / (c ** 2 + (c + 10) ** 2 + C1)
    assert abs(ssim(a, b) - ref) < 1e-9


def _smooth_image(seed, h=32, w=40):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[:h, :w]
    img = np.zeros((h, w, 3))
    for ch in range(3):
        fx, fy, ph = rng.uniform(0.05, 0.3, 2).tolist() + [rng.uniform(0, 6)]
        img[..., ch] = 127.5 + 120 * np.sin(fx * x + ph) * np.cos(fy * y)
    return np.clip(img, 0, 255).astype(np.uint8)


def test_ssim_inverted_image_low():
    a = _smooth_image(3)
    assert ssim(a, 255 - a) < 0.5


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_ssim_matches_skimage(seed):
    metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(seed)
    a = _smooth_image(seed)
    b = np.clip(a.astype(int) + rng.integers(-40, 41, a.shape), 0, 255).astype(np.uint8)
    ref = metrics.structural_similarity(a, b, gaussian_weights=True, sigma=1.5,
                                        use_sample_covariance=False, data_range=255,
                                        channel_axis=-1)
    assert abs(ssim(a, b) - ref) < 1e-6


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_metrics_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 256, (2, 16, 18, 3), dtype=np.uint8)
    assert abs(psnr(a, b) - psnr(b, a)) < 1e-9
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-9


# -- views -----------------------------------------------------------------------------------------

def test_quadrant_layout():
    v = np.zeros((2, 8, 12, 3), np.uint8)
    v[:, :4, :6] = 1
    v[:, :4, 6:] = 2
    v[:, 4:, :6] = 3
    v[:, 4:, 6:] = 4
    q = quadrants(v)
    assert [int(q[k].max()) for k in ("front", "rear", "left", "right")] == [1, 2, 3, 4]
    assert front_view(v, True).shape == (2, 4, 6, 3) and front_view(v, False) is v


# -- position probe --------------------------------------------------------------------------

# own camera looks along world +x; columns are camera right, down, forward
LOOK_X = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
K = CameraIntrinsics.from_fov(48, 32)


def _tracks(other_xy, n=1):
    other_t = np.array([[other_xy[0], other_xy[1], CAMERA_HEIGHT]] * n)
    center_z = CAMERA_HEIGHT + BODY_EXTENTS[2] / 2.0 - CAMERA_HEIGHT
    own = CameraTrack([K], np.stack([LOOK_X] * n), np.array([[0.0, 0.0, center_z]] * n))
    other = CameraTrack([K], np.stack([LOOK_X] * n), other_t)
    return own, other


def test_probe_principal_point_on_axis():
    own, other = _tracks((15.0, 0.0))
    frame = np.zeros((1, 32, 48, 3), np.uint8)
    frame[0, 15:17, 23:25] = (200, 10, 10)
    (pf,) = position_probe(frame, own, other)
    assert pf.eligible
    assert np.allclose(pf.projected, [K.cx, K.cy], atol=1e-9)
    assert pf.error == 0.0


def test_probe_excludes_outside_frustum():
    for xy in [(-15.0, 0.0), (15.0, 40.0), (0.2, 0.0), (80.0, 0.0)]:
        own, other = _tracks(xy)
        (pf,) = position_probe(np.zeros((1, 32, 48, 3), np.uint8), own, other)
        assert not pf.eligible and not pf.miss and pf.error is None
    assert probe_summary([pf])["frames"] == 0


def test_probe_miss_flag():
    own, other = _tracks((15.0, 0.0))
    (pf,) = position_probe(np.full((1, 32, 48, 3), 90, np.uint8), own, other)
    assert pf.eligible and pf.miss and pf.error is None
    assert probe_summary([pf])["miss_rate"] == 1.0


def test_probe_error_monotonic_in_blob_distance():
    own, other = _tracks((15.0, 0.0))
    errs = []
    for d in range(0, 20, 2):
        frame = np.zeros((1, 32, 48, 3), np.uint8)
        frame[0, 15:17, 4 + d:6 + d] = (220, 30, 30)
        errs.append(position_probe(frame, own, other)[0].error)
    # blob moves toward the principal point, so error shrinks strictly
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_red_detector_thresholds():
    f = np.zeros((4, 4, 3), np.uint8)
    f[0, 0] = (79, 0, 0)  # too dark
    f[1, 1] = (150, 101, 0)  # not dominant enough
    assert red_centroid(f) is None
    f[2, 3] = (150, 99, 99)
    assert np.array_equal(red_centroid(f), [3.5, 2.5])


# -- paired evaluation -------------------------------------------------------------------------

SMALL = Config({"model.blocks": 2, "model.dim": 32, "model.heads": 2, "model.head_dim": 16,
                "latent.channels": 16})


@pytest.fixture(scope="module")
def prepared(sample_clips):
    return [prepare_clip(c, SMALL) for c in sample_clips[:2]]


def test_ground_truth_oracle(prepared):
    rep = paired_eval(None, SMALL, prepared, videos=[p.frames for p in prepared])
    agg = rep.aggregate()
    assert agg["psnr.mean"] == 99.0 and agg["ssim.mean"] == 1.0 and agg["frame0_psnr.mean"] == 99.0
    assert agg["clips"] == 2


def test_aggregate_is_mean_of_clips(prepared):
    noisy = [tuple(np.clip(f.astype(int) + 7 * (i + 1), 0, 255).astype(np.uint8) for f in p.frames)
             for i, p in enumerate(prepared)]
    rep = paired_eval(None, SMALL, prepared, videos=noisy)
    agg = rep.aggregate()
    for k in ("psnr", "ssim", "psnr_front", "frame0_psnr"):
        assert agg[f"{k}.mean"] == np.mean([c[k] for c in rep.clips])
    text = rep.to_text()
    assert "psnr.mean=" in text and "clip_00001.psnr=" in text and "probe.miss_rate=" in text


def test_untrained_model_report_finite_and_deterministic(prepared):
    params = init_params(SMALL.model, 0)
    a = paired_eval(params, SMALL, prepared[:1], seed=3, n_steps=2)
    b = paired_eval(params, SMALL, prepared[:1], seed=3, n_steps=2)
    assert a.to_text() == b.to_text()
    assert all(np.isfinite(v) for v in a.clips[0].values())
    # frame 0 is the conditioning latent, decoded losslessly up to 8-bit rounding
    assert a.clips[0]["frame0_psnr"] > 30


def test_report_empty_probe():
    agg = EvalReport(clips=[{"psnr": 1.0}]).aggregate()
    assert agg["probe.frames"] == 0 and math.isnan(agg["probe.mean_px"])
