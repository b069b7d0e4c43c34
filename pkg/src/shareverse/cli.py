"""Command-line entry point: ``shareverse <subcommand> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data or IO error,
3 numeric failure (NaN/Inf, gradcheck), 4 invariant-suite failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .autodiff import NumericError
from .config import Config, ConfigError, load_config
from .world.storage import DataError, DataIOError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataIOError(f"cannot create {path}: {e}") from e


def cmd_gen_data(args) -> int:
    from .world.clips import generate_clips, write_dataset

    cfg = load_config(args.config)
    if args.pairs < 1:
        raise UsageError(f"--pairs must be positive, got {args.pairs}")
    clips = generate_clips(args.pairs, args.seed, cfg["data.view_h"], cfg["data.view_w"],
                           cfg["ablate.four_views"], progress)
    out = Path(args.out)
    _mkdir(out)
    write_dataset(clips, out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import load_checkpoint, make_vae, new_state, prepare_clip, save_checkpoint, train
    from .world.clips import read_dataset

    cfg = load_config(args.config)
    clips = read_dataset(args.data)
    if not clips:
        raise DataError(f"no clips found under {args.data}")
    vae = make_vae(cfg)
    prepared = [prepare_clip(c, cfg, vae) for c in clips]
    state = load_checkpoint(args.resume, cfg, resuming=True)[0] if args.resume else new_state(cfg)
    state = train(cfg, prepared, state, progress)
    save_checkpoint(state, cfg, args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    from .evaluation import generate_clip
    from .training import load_checkpoint, prepare_clip
    from .world.clips import read_clip
    from .world.storage import write_svt

    state, cfg = load_checkpoint(args.ckpt)
    clip = prepare_clip(read_clip(args.clip), cfg)
    steps = cfg["eval.steps"] if args.steps is None else args.steps
    if steps < 1:
        raise UsageError(f"--steps must be positive, got {steps}")
    videos = generate_clip(state.params, cfg, clip, args.seed, steps, progress)
    out = Path(args.out)
    _mkdir(out)
    for k, v in enumerate(videos, start=1):
        write_svt(out / f"agent{k}_generated.svt", v)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import paired_eval
    from .training import load_checkpoint, make_vae, prepare_clip
    from .world.clips import read_dataset

    state, cfg = load_checkpoint(args.ckpt)
    clips = read_dataset(args.data)
    if not clips:
        raise DataError(f"no clips found under {args.data}")
    vae = make_vae(cfg)
    prepared = [prepare_clip(c, cfg, vae) for c in clips]
    report = paired_eval(state.params, cfg, prepared, args.seed, args.steps, progress)
    try:
        Path(args.report).write_text(report.to_text())
    except OSError as e:
        raise DataIOError(f"cannot write report {args.report}: {e}") from e
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .invariants import GRADCHECK_CONFIG, model_gradcheck

    cfg = GRADCHECK_CONFIG
    if args.config:
        # keep the configured structure, shrink widths so every element can be probed
        cfg = dataclasses.replace(load_config(args.config).model, n_blocks=GRADCHECK_CONFIG.n_blocks,
                                  c=GRADCHECK_CONFIG.c, n_heads=GRADCHECK_CONFIG.n_heads,
                                  head_dim=GRADCHECK_CONFIG.head_dim,
                                  latent_c=GRADCHECK_CONFIG.latent_c)
    if not args.tol > 0:
        raise UsageError(f"--tol must be positive, got {args.tol}")
    report = model_gradcheck(args.tol, args.seed, cfg, progress)
    print(report.table())
    print(f"max_rel_error={report.max_rel_error:.3e} tolerance={args.tol:g} "
          f"{'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_invariants(args) -> int:
    from .invariants import run_invariants

    results = run_invariants(progress)
    for name, err in results.items():
        print(f"{'PASS' if err is None else 'FAIL'} {name}" + ("" if err is None else f": {err}"))
    failed = sum(err is not None for err in results.values())
    print(f"{len(results) - failed}/{len(results)} invariants passed")
    return EXIT_OK if not failed else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shareverse", description="Two-agent camera-conditioned video diffusion.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-data", help="render a synthetic paired-agent dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pairs", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("train", help="train the denoiser")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--resume")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate both agents' videos for one clip")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("eval", help="paired PSNR/SSIM and position probe over a dataset")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("invariants", help="run the property suite")
    s.set_defaults(fn=cmd_invariants)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
