import subprocess
import sys

import pytest

from shareverse import cli
from shareverse.config import Config

SMALL = {"model.blocks": 2, "model.dim": 32, "model.heads": 2, "model.head_dim": 16,
         "latent.channels": 16, "train.steps": 1, "train.batch": 2, "eval.steps": 2}


def shell(*args):
    """Run the installed entry point in a fresh interpreter."""
    return subprocess.run([sys.executable, "-m", "shareverse", *args], capture_output=True,
                          text=True)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.cfg").write_text(Config(SMALL).to_text())
    return d


@pytest.fixture(scope="module")
def dataset(workdir):
    r = shell("gen-data", "--config", str(workdir / "small.cfg"), "--out", str(workdir / "data"),
              "--pairs", "2", "--seed", "4")
    assert r.returncode == 0, r.stderr
    return workdir / "data"


def test_smoke_gen_then_train(workdir, dataset):
    assert sorted(p.name for p in dataset.iterdir()) == ["clip_00000", "clip_00001"]
    r = shell("train", "--config", str(workdir / "small.cfg"), "--data", str(dataset),
              "--out", str(workdir / "m.ckpt"))
    assert r.returncode == 0, r.stderr
    assert (workdir / "m.ckpt").stat().st_size > 0
    assert "train step 1/1" in r.stderr and r.stdout == ""


def test_sample_and_eval(workdir, dataset):
    from shareverse.world.storage import read_svt
    ckpt = workdir / "m.ckpt"
    if not ckpt.exists():
        pytest.skip("needs the smoke checkpoint")
    r = shell("sample", "--ckpt", str(ckpt), "--clip", str(dataset / "clip_00000"),
              "--out", str(workdir / "gen"), "--steps", "2")
    assert r.returncode == 0, r.stderr
    v = read_svt(workdir / "gen" / "agent1_generated.svt")
    assert v.shape == (9, 64, 96, 3) and str(v.dtype) == "uint8"
    r = shell("eval", "--ckpt", str(ckpt), "--data", str(dataset), "--report",
              str(workdir / "report.txt"), "--steps", "2")
    assert r.returncode == 0, r.stderr
    keys = {ln.split("=")[0] for ln in (workdir / "report.txt").read_text().splitlines()}
    assert {"psnr.mean", "ssim.mean", "probe.mean_px", "probe.miss_rate", "clip_00001.psnr"} <= keys
    assert r.stderr.count("eval clip") == 2


def test_resume(workdir, dataset):
    ckpt = workdir / "m.ckpt"
    if not ckpt.exists():
        pytest.skip("needs the smoke checkpoint")
    (workdir / "two.cfg").write_text(Config({**SMALL, "train.steps": 2}).to_text())
    r = shell("train", "--config", str(workdir / "two.cfg"), "--data", str(dataset),
              "--out", str(workdir / "m2.ckpt"), "--resume", str(ckpt))
    assert r.returncode == 0, r.stderr
    assert "train step 2/2" in r.stderr and "train step 1/2" not in r.stderr


def test_usage_errors(workdir):
    assert cli.run([]) == cli.EXIT_USAGE
    assert cli.run(["bogus"]) == cli.EXIT_USAGE
    assert cli.run(["train", "--config", "x"]) == cli.EXIT_USAGE
    (workdir / "bad.cfg").write_text("model.depht=3\n")
    assert cli.run(["gen-data", "--config", str(workdir / "bad.cfg"), "--out", str(workdir / "x"),
                    "--pairs", "1", "--seed", "0"]) == cli.EXIT_USAGE
    assert cli.run(["gen-data", "--config", str(workdir / "small.cfg"), "--out",
                    str(workdir / "x"), "--pairs", "0", "--seed", "0"]) == cli.EXIT_USAGE
    assert cli.run(["gradcheck", "--tol", "-1"]) == cli.EXIT_USAGE


def test_data_errors(workdir, capsys):
    empty = workdir / "empty"
    empty.mkdir(exist_ok=True)
    assert cli.run(["train", "--config", str(workdir / "small.cfg"), "--data", str(empty),
                    "--out", str(workdir / "n.ckpt")]) == cli.EXIT_DATA
    assert cli.run(["eval", "--ckpt", str(workdir / "missing.ckpt"), "--data", str(empty),
                    "--report", str(workdir / "r.txt")]) == cli.EXIT_DATA
    (workdir / "junk.ckpt").write_bytes(b"not a checkpoint")
    assert cli.run(["sample", "--ckpt", str(workdir / "junk.ckpt"), "--clip", str(empty),
                    "--out", str(workdir / "g")]) == cli.EXIT_DATA
    assert "error" in capsys.readouterr().err


def test_config_mismatch_with_data(workdir, dataset):
    (workdir / "front.cfg").write_text(Config({**SMALL, "ablate.four_views": False}).to_text())
    assert cli.run(["train", "--config", str(workdir / "front.cfg"), "--data", str(dataset),
                    "--out", str(workdir / "f.ckpt")]) == cli.EXIT_USAGE


def test_gradcheck_failure_exit_code(workdir):
    # an ablated structure keeps the run short; no finite-difference check reaches 1e-13
    (workdir / "lean.cfg").write_text(Config({"ablate.raymap_mode": "off",
                                              "ablate.cross_agent": False}).to_text())
    r = shell("gradcheck", "--config", str(workdir / "lean.cfg"), "--tol", "1e-13")
    assert r.returncode == cli.EXIT_NUMERIC, r.stderr
    assert "FAIL" in r.stdout and "final.mod.w" in r.stdout


def test_invariants_exit_codes(monkeypatch, capsys):
    from shareverse import invariants
    assert cli.run(["invariants"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert f"{len(invariants.INVARIANTS)}/{len(invariants.INVARIANTS)} invariants passed" in out

    def broken():
        assert False, "deliberately broken"

    monkeypatch.setattr(invariants, "INVARIANTS", {"broken": broken})
    assert cli.run(["invariants"]) == cli.EXIT_INVARIANT
    assert "FAIL broken" in capsys.readouterr().out
