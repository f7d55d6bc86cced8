"""Per-stage processing time (ms per second of audio) for each solver path."""

import argparse

from gsvdmusic.bench import run_timing
from gsvdmusic.pipeline import PipelineConfig
from gsvdmusic.synth import (SceneSpec, SourceSpec, direction_grid, make_steering, preset,
                             synthesize_scene)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--array", default="sphere60", choices=["circular8", "sphere60"])
    ap.add_argument("--grid", default="azimuth", choices=["azimuth", "sphere"])
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--paths", default="naive,batched,reference")
    ap.add_argument("--precision", default="single", choices=["single", "double"])
    ap.add_argument("--runs", type=int, default=5)
    args = ap.parse_args()

    geom = preset(args.array)
    cfg = PipelineConfig(T=50, precision=args.precision)
    steering = make_steering(geom, direction_grid(args.grid), cfg=cfg.stft)
    block = synthesize_scene(geom, SceneSpec([SourceSpec(60.0), SourceSpec(200.0)], noise_db=-10.0,
                                             duration=args.duration, seed=1))
    reports = {}
    for path in args.paths.split(","):
        reports[path] = run_timing(block, steering, None, cfg, path, runs=args.runs)
        print(reports[path].table())
    if "naive" in reports and "batched" in reports:
        ratio = reports["naive"].stages["gsvd"] / reports["batched"].stages["gsvd"]
        print(f"gsvd stage speedup batched vs naive: {ratio:.2f}x on {reports['batched'].cores} cores")


if __name__ == "__main__":
    main()
