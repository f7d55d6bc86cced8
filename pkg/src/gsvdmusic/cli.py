"""Command-line entry point: ``locate``, ``synth``, ``bench`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import run_accuracy, run_timing, write_report
from .errors import ConfigError, GsvdMusicError
from .frontend import StftConfig, load_audio, save_audio
from .gsvd import PATHS, PRECISIONS, SolverConfig
from .music import SteeringField, write_pbar_csv
from .pipeline import Pipeline, PipelineConfig, load_config
from .synth import (ArrayGeometry, SceneSpec, capture_noise_model, direction_grid, load_noise_model,
                    make_steering, save_noise_model, synthesize_scene)


def _load_inputs(cfg: PipelineConfig):
    """Read audio, steering and noise files named in ``cfg``, reporting missing ones by field."""
    problems = []
    if cfg.audio is None:
        problems.append("audio: no input file given")
    if cfg.steering is None:
        problems.append("steering: no steering file given")
    for name in ("audio", "steering", "noise_model"):
        value = getattr(cfg, name)
        if value is not None and not Path(value).is_file():
            problems.append(f"{name}: file not found: {value}")
    if problems:
        raise ConfigError(problems)
    block = load_audio(cfg.audio)
    steering = SteeringField.load(cfg.steering)
    noise = load_noise_model(cfg.noise_model) if cfg.noise_model else None
    return block, steering, noise


def _pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.precision:
        cfg.precision = args.precision
    if args.path:
        cfg.path = args.path
    if args.out:
        cfg.out = args.out
    problems = cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def cmd_locate(args) -> int:
    cfg = _pipeline_config(args)
    block, steering, noise = _load_inputs(cfg)
    pipe = Pipeline(cfg, steering, noise, block)
    result = pipe.run()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimates.jsonl").write_text(result.jsonl())
    if args.pbar_csv:
        write_pbar_csv(out / "pbar.csv", [f.frame for f in result.frames],
                       [f.pbar for f in result.frames], pipe.steering.directions)
    if result.fallback_bins:
        print(f"warning: {result.fallback_bins} bins fell back to the reference solver", file=sys.stderr)
    print(f"{len(result.frames)} frames -> {out / 'estimates.jsonl'}")
    return 0


def cmd_synth(args) -> int:
    """Write scene audio, steering field, optional noise model and a locate config."""
    spec = json.loads(Path(args.config).read_text())
    sr = float(spec.get("sample_rate", 16000))
    geom = ArrayGeometry.from_dict(spec.get("geometry", "circular8"))
    stft = StftConfig(**spec.get("stft", {}))
    scene = SceneSpec.from_dict(spec.get("scene", {}))
    if args.seed is not None:
        scene.seed = args.seed
    out = Path(args.out or spec.get("out", "synth_out"))
    out.mkdir(parents=True, exist_ok=True)

    save_audio(out / "scene.wav", synthesize_scene(geom, scene, sr))
    grid = direction_grid(spec.get("grid", "azimuth"))
    make_steering(geom, grid, cfg=stft, sample_rate=sr).save(out / "steering.bin")
    geom.save(out / "geometry.json")
    scene.save(out / "scene.json")
    locate = {"stft": stft.__dict__, "audio": "scene.wav", "steering": "steering.bin",
              "out": "locate_out", **spec.get("pipeline", {})}
    if "noise_scene" in spec:
        nspec = SceneSpec.from_dict(spec["noise_scene"])
        if args.seed is not None:
            nspec.seed = args.seed + 1
        save_noise_model(out / "noise.corr", capture_noise_model(geom, nspec, stft, sr))
        locate["noise_model"] = "noise.corr"
    (out / "locate.json").write_text(json.dumps(locate, indent=1))
    print(f"wrote scene, steering ({len(grid)} directions) and locate.json to {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _pipeline_config(args)
    block, steering, noise = _load_inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [p.strip() for p in args.paths.split(",") if p.strip()]
    bad = [p for p in paths if p not in PATHS]
    if bad:
        raise ConfigError(f"--paths: unknown path(s) {bad}; choose from {list(PATHS)}")
    reports = []
    for p in paths:
        rep = run_timing(block, steering, noise, cfg, p, runs=args.runs)
        print(rep.table())
        reports.append(rep.to_dict())
    if reports:
        write_report(out / "timing.json", _Bundle(reports))
    if args.accuracy:
        acc = run_accuracy(block, steering, noise, cfg, test_path=cfg.path,
                           test_precision=cfg.precision)
        print(acc.table())
        write_report(out / "accuracy.json", acc)
    return 0


class _Bundle:
    def __init__(self, reports):
        self.reports = reports

    def to_dict(self):
        return {"reports": self.reports}


def _invariants(pipe: Pipeline, cfg: PipelineConfig, n_frames: int):
    """Yield ``(name, ok, detail)`` for each invariant checked on the first frames."""
    idx, R = next(pipe.correlations())
    R = R[:n_frames]
    flat = R.reshape(-1, *R.shape[2:])
    m = flat.shape[-1]
    herm = np.abs(flat - flat.conj().swapaxes(1, 2)).max() / np.abs(flat).max()
    yield "correlation Hermitian", herm <= 1e-12, f"max asym {herm:.1e}"
    w = np.linalg.eigvalsh(flat)
    psd = (w[:, 0] / np.maximum(w[:, -1], 1e-300)).min()
    yield "correlation PSD", psd >= -1e-10, f"min eig/max eig {psd:.1e}"

    res = pipe.solve(R)
    ref = pipe.solve(R, "reference")
    ctype, _ = PRECISIONS[cfg.precision]
    Kinv = pipe.noise.inverse("double", cfg.solver.pivoting)
    kidx = np.tile(np.arange(pipe.noise.n_bins) if pipe.noise.n_bins > 1 else [0], len(R))
    A = Kinv[kidx] @ flat
    rec = np.linalg.norm(res.reconstruct().astype(complex) - A, axis=(1, 2)) / np.linalg.norm(A, axis=(1, 2))
    yield "reconstruction", rec.max() <= 1e-4, f"max rel residual {rec.max():.1e}"
    E = res.E.astype(complex)
    uni = np.linalg.norm(E.conj().swapaxes(1, 2) @ E - np.eye(m), axis=(1, 2)).max()
    yield "E unitary", uni <= 1e-4 * m, f"max ||E^H E - I|| {uni:.1e}"
    order = np.all(np.diff(res.sigma, axis=1) <= 0) and np.all(res.sigma >= 0)
    yield "singular values ordered", bool(order), "non-increasing and non-negative"
    sv = (np.abs(res.sigma - ref.sigma) / ref.sigma[:, :1]).max()
    yield "singular values vs reference", sv <= 1e-5, f"max err/sigma_1 {sv:.1e}"
    yield "convergence", bool(res.converged.all()), f"{int(res.fallback.sum())} fallback bins"
    if cfg.path in ("naive", "batched"):
        other = pipe.solve(R, "naive" if cfg.path == "batched" else "batched")
        same = np.array_equal(other.E, res.E) and np.array_equal(other.sigma, res.sigma)
        yield "naive equals batched", same, "bitwise"

    P = pipe.power(res, len(R))
    yield "power finite and non-negative", bool(np.all(np.isfinite(P)) and np.all(P >= 0)), \
        f"min {P.min():.3e}"
    _, est = pipe.estimate(P)
    good = all(
        len({e.rank for e in fr}) == len(fr)
        and all(a.power >= b.power for a, b in zip(fr, fr[1:]))
        for fr in est
    )
    yield "estimates ranked", good, "unique ranks, non-increasing power"


def cmd_verify(args) -> int:
    cfg = _pipeline_config(args)
    block, steering, noise = _load_inputs(cfg)
    pipe = Pipeline(replace(cfg, chunk_frames=max(cfg.chunk_frames, args.frames)), steering, noise,
                    block)
    failed = 0
    for name, ok, detail in _invariants(pipe, cfg, args.frames):
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsvdmusic", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help):
        p.add_argument("--config", required=True, help=config_help)
        p.add_argument("--seed", type=int, default=None, help="override the scene seed")
        p.add_argument("--precision", choices=sorted(PRECISIONS), default=None)
        p.add_argument("--path", choices=PATHS, default=None, help="solver path")
        p.add_argument("--out", default=None, help="output directory")
        return p

    p = common(sub.add_parser("locate", help="per-frame source estimates as JSON lines"),
               "pipeline config JSON")
    p.add_argument("--pbar-csv", action="store_true", help="also write integrated power per frame")
    p.set_defaults(func=cmd_locate)

    p = common(sub.add_parser("synth", help="generate a synthetic scene and its inputs"),
               "synthesis spec JSON (geometry, grid, stft, scene, noise_scene)")
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("bench", help="timing and accuracy reports"), "pipeline config JSON")
    p.add_argument("--paths", default="batched", help="comma-separated solver paths to time")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--accuracy", action="store_true",
                   help="compare the configured path against the double-precision reference")
    p.set_defaults(func=cmd_bench)

    p = common(sub.add_parser("verify", help="check numerical invariants on a config"),
               "pipeline config JSON")
    p.add_argument("--frames", type=int, default=2, help="number of frames to check")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return exc.exit_code
    except GsvdMusicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
