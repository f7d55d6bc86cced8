"""Timing and accuracy harness comparing solver paths on the same pipeline inputs."""

from __future__ import annotations

import json
import os
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AudioError, NumericalError
from .frontend import SampleBlock
from .gsvd import NoiseModel, SolverConfig
from .music import SteeringField
from .pipeline import STAGES, Pipeline, PipelineConfig

PATH_LABELS = {"naive": "naive-sequential", "batched": "batched-parallel", "reference": "reference"}


@dataclass
class TimingReport:
    """Median wall time per stage in ms per second of audio."""

    path: str
    stages: dict
    real_time_factor: float
    runs: int
    audio_seconds: float
    frames: int
    channels: int
    precision: str
    cores: int = field(default_factory=lambda: os.cpu_count() or 1)

    def to_dict(self):
        return asdict(self)

    def table(self) -> str:
        rows = [f"path {self.path} ({self.precision}, M={self.channels}, {self.frames} frames, "
                f"{self.runs} runs, {self.cores} cores)"]
        rows += [f"  {k:<12}{v:12.3f} ms/s" for k, v in self.stages.items()]
        rows.append(f"  {'RTF':<12}{self.real_time_factor:12.4f}")
        return "\n".join(rows)


@dataclass
class AccuracyReport:
    rmse: float
    consistency: float  # percent
    frames: int
    values: int
    test: str
    reference: str

    def to_dict(self):
        return asdict(self)

    def table(self) -> str:
        return (f"{self.test} vs {self.reference}: RMSE {self.rmse:.3e}, "
                f"consistency {self.consistency:.2f}% over {self.frames} frames ({self.values} values)")


def run_timing(block: SampleBlock, steering: SteeringField, noise: NoiseModel | None,
               cfg: PipelineConfig, path: str | None = None, runs: int = 5,
               warmup: int = 1) -> TimingReport:
    """Median per-stage time over ``runs`` pipeline runs after ``warmup`` discarded runs."""
    if block.n_samples == 0 or block.duration <= 0:
        raise AudioError("cannot time a zero-duration input")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cfg = replace(cfg, path=path or cfg.path)
    pipe = Pipeline(cfg, steering, noise, block)
    for _ in range(warmup):
        pipe.run()
    samples = {k: [] for k in STAGES + ("total",)}
    n_frames = 0
    for _ in range(runs):
        out = pipe.run()
        n_frames = len(out.frames)
        for k in samples:
            samples[k].append(out.timings[k])
    per_s = 1000.0 / block.duration
    stages = {k: statistics.median(v) * per_s for k, v in samples.items()}
    precision = "double" if cfg.path == "reference" else cfg.precision
    return TimingReport(PATH_LABELS[cfg.path], stages, stages["total"] / 1000.0, runs,
                        block.duration, n_frames, block.channels, precision)


def run_accuracy(block: SampleBlock, steering: SteeringField, noise: NoiseModel | None,
                 cfg: PipelineConfig, test_path="batched", test_precision="single",
                 reference_path="reference", reference_precision="double",
                 test_solver: SolverConfig | None = None) -> AccuracyReport:
    """RMSE over every ``P(theta, bin, frame)`` and the share of frames with equal estimate sets.

    Both paths see the same correlation matrices, so the comparison isolates the
    solver and MUSIC stages.
    """
    pipe = Pipeline(cfg, steering, noise, block)
    sq, count, same, frames = 0.0, 0, 0, 0
    for idx, R in pipe.correlations():
        c = len(idx)
        Pt = pipe.power(pipe.solve(R, test_path, test_precision, test_solver or cfg.solver), c)
        Pr = pipe.power(pipe.solve(R, reference_path, reference_precision), c)
        if Pt.shape != Pr.shape:
            raise NumericalError(f"frame count mismatch between paths: {Pt.shape} vs {Pr.shape}")
        diff = Pt.astype(np.float64) - Pr.astype(np.float64)
        sq += float(np.sum(diff * diff))
        count += diff.size
        _, et = pipe.estimate(Pt)
        _, er = pipe.estimate(Pr)
        for a, b in zip(et, er):
            same += {e.index for e in a} == {e.index for e in b}
        frames += c
    if frames == 0:
        raise NumericalError("no frames to compare")
    return AccuracyReport(float(np.sqrt(sq / count)), 100.0 * same / frames, frames, count,
                          f"{test_path}/{test_precision}", f"{reference_path}/{reference_precision}")


def write_report(path, report, **extra):
    """JSON report with a ``generated_at`` timestamp (the only non-deterministic field)."""
    data = {"generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"), **report.to_dict(), **extra}
    Path(path).write_text(json.dumps(data, indent=1))
