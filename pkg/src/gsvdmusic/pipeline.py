"""End-to-end localization: STFT, windowed correlation, GSVD, MUSIC and peak search."""

from __future__ import annotations

import json
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .correlation import windowed_correlations
from .errors import ConfigError
from .frontend import SampleBlock, StftConfig, stft_array
from .gsvd import PATHS, PRECISIONS, NoiseModel, SolverConfig, gsvd, solve_products
from .music import MusicConfig, SourceEstimate, SteeringField, calc_average_power, peak_search

STAGES = ("frontend", "correlation", "gsvd", "music")
ENV_PREFIX = "SSL_"


@dataclass
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    T: int = 50
    solver: SolverConfig = field(default_factory=SolverConfig)
    music: MusicConfig = field(default_factory=MusicConfig)
    audio: str | None = None
    steering: str | None = None
    noise_model: str | None = None  # None means K = I
    out: str = "out"
    precision: str = "single"
    path: str = "batched"
    chunk_frames: int = 8

    def problems(self) -> list[str]:
        out = self.stft.problems() + self.solver.problems() + self.music.problems()
        if self.T < 1:
            out.append("T must be >= 1")
        if self.precision not in PRECISIONS:
            out.append(f"precision must be one of {sorted(PRECISIONS)}")
        if self.path not in PATHS:
            out.append(f"path must be one of {list(PATHS)}")
        if self.chunk_frames < 1:
            out.append("chunk_frames must be >= 1")
        return out

    def check_inputs(self, block: SampleBlock, steering: SteeringField, noise: NoiseModel | None):
        """Cross-field dimension checks; returns a list of problems."""
        out = self.problems()
        m = block.channels
        out += [p for p in self.music.problems(m) if p not in out]
        if steering.m != m:
            out.append(f"steering: M={steering.m} but audio has {m} channels")
        if not np.isin(self.stft.bins, steering.bins).all():
            out.append(f"steering: bins {steering.bins[0]}..{steering.bins[-1]} do not cover "
                       f"stft bins {self.stft.bin_min}..{self.stft.bin_max}")
        if steering.frame_length != self.stft.frame_length:
            out.append(f"steering: frame_length {steering.frame_length} != stft.frame_length "
                       f"{self.stft.frame_length}")
        if steering.sample_rate != block.sample_rate:
            out.append(f"steering: sample_rate {steering.sample_rate} != audio {block.sample_rate}")
        if noise is not None:
            if noise.m != m:
                out.append(f"noise_model: M={noise.m} but audio has {m} channels")
            if noise.n_bins not in (1, self.stft.n_bins):
                out.append(f"noise_model: {noise.n_bins} bins, stft has {self.stft.n_bins}")
        if block.n_samples < self.stft.frame_length:
            out.append(f"audio: {block.n_samples} samples is shorter than one frame")
        else:
            n_frames = (block.n_samples - self.stft.frame_length) // self.stft.shift + 1
            if n_frames < self.T:
                out.append(f"T: window of {self.T} frames exceeds the {n_frames} frames of audio")
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        return _build(cls, d, "")


def _build(cls, d, prefix):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError([f"unknown config field {prefix}{k}" for k in unknown])
    kw = {}
    for name, value in d.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default) and isinstance(value, dict):
            value = _build(type(default), value, f"{prefix}{name}.")
        kw[name] = value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad config section {prefix or 'root'}: {exc}") from None


def apply_env(d: dict, env=None) -> dict:
    """Overlay ``SSL_<FIELD>`` / ``SSL_<SECTION>__<FIELD>`` variables onto a config dict.

    Values are parsed as JSON when possible, else taken as strings.  Variables
    whose first component is not a config field (``SSL_CERT_FILE`` and the
    like) are ignored.
    """
    env = os.environ if env is None else env
    known = {f.name for f in fields(PipelineConfig)}
    d = json.loads(json.dumps(d))
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        parts = ["T" if p == "t" else p for p in parts]
        if parts[0] not in known:
            continue
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        node = d
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return d


def load_config(path, env=None) -> PipelineConfig:
    """Read a JSON config; relative file paths resolve against the config's directory."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = PipelineConfig.from_dict(apply_env(d, env))
    for name in ("audio", "steering", "noise_model", "out"):
        value = getattr(cfg, name)
        if value is not None and not Path(value).is_absolute():
            setattr(cfg, name, str(path.parent / value))
    return cfg


@dataclass
class FrameResult:
    frame: int
    estimates: list[SourceEstimate]
    pbar: np.ndarray

    def to_dict(self):
        return {"frame": int(self.frame), "estimates": [e.to_dict() for e in self.estimates]}


@dataclass
class PipelineOutput:
    frames: list[FrameResult]
    timings: dict  # seconds per stage, plus "total"
    fallback_bins: int = 0
    power: np.ndarray | None = None  # (F, D, bins) when requested

    def jsonl(self) -> str:
        return "".join(json.dumps(f.to_dict()) + "\n" for f in self.frames)


class Pipeline:
    """Holds validated inputs and the noise-model inverse; ``run`` processes a block."""

    def __init__(self, cfg: PipelineConfig, steering: SteeringField, noise: NoiseModel | None,
                 block: SampleBlock):
        problems = cfg.check_inputs(block, steering, noise)
        if problems:
            raise ConfigError(problems)
        self.cfg = cfg
        self.block = block
        self.steering = steering.restrict(cfg.stft.bins)
        self.noise = noise or NoiseModel.identity(block.channels, cfg.stft.n_bins)
        self.n_bins = cfg.stft.n_bins

    def correlations(self, timer=None):
        """Yield ``(frame_indices, R)`` chunks with ``R`` shaped ``(c, bins, M, M)``."""
        timer = timer if timer is not None else defaultdict(float)
        t0 = time.perf_counter()
        X = stft_array(self.block, self.cfg.stft)
        timer["frontend"] += time.perf_counter() - t0
        idx, mats = [], []
        t0 = time.perf_counter()
        for f, R in windowed_correlations(X, self.cfg.T):
            idx.append(f)
            mats.append(R)
            if len(idx) == self.cfg.chunk_frames:
                chunk = np.stack(mats)
                timer["correlation"] += time.perf_counter() - t0
                yield np.array(idx), chunk
                idx, mats = [], []
                t0 = time.perf_counter()
        if idx:
            chunk = np.stack(mats)
            timer["correlation"] += time.perf_counter() - t0
            yield np.array(idx), chunk

    def solve(self, R, path=None, precision=None, solver: SolverConfig | None = None):
        """GSVD of a ``(c, bins, M, M)`` chunk; returns a flat result of ``c * bins`` items."""
        path = path or self.cfg.path
        precision = precision or self.cfg.precision
        solver = solver or self.cfg.solver
        c, b, m, _ = R.shape
        flat = R.reshape(c * b, m, m)
        kidx = np.tile(np.arange(b) if self.noise.n_bins > 1 else np.zeros(b, np.int64), c)
        if path == "reference":
            return gsvd(self.noise, flat, solver, "reference", kidx=kidx)
        Kinv = self.noise.inverse(precision, solver.pivoting)
        return solve_products(Kinv, flat, kidx, solver, path, precision)

    def power(self, res, c):
        m = self.block.channels
        E = res.E.reshape(c, self.n_bins, m, m)
        return calc_average_power(E, self.steering, self.cfg.music)

    def estimate(self, P):
        """Integrate over all bins and pick peaks, per frame of a ``(c, D, bins)`` chunk."""
        pbar = P.sum(axis=-1)
        return pbar, [peak_search(row, self.steering, self.cfg.music) for row in pbar]

    def run(self, keep_power=False) -> PipelineOutput:
        timer = defaultdict(float)
        frames, powers = [], []
        fallback = 0
        start = time.perf_counter()
        for idx, R in self.correlations(timer):
            t0 = time.perf_counter()
            res = self.solve(R)
            t1 = time.perf_counter()
            P = self.power(res, len(idx))
            pbar, est = self.estimate(P)
            t2 = time.perf_counter()
            timer["gsvd"] += t1 - t0
            timer["music"] += t2 - t1
            fallback += int(res.fallback.sum())
            frames += [FrameResult(int(f), e, p) for f, e, p in zip(idx, est, pbar)]
            if keep_power:
                powers.append(P)
        timer["total"] = time.perf_counter() - start
        power = np.concatenate(powers) if keep_power and powers else None
        return PipelineOutput(frames, {k: timer[k] for k in STAGES + ("total",)}, fallback, power)


def run_pipeline(block, steering, noise=None, cfg: PipelineConfig | None = None,
                 keep_power=False) -> PipelineOutput:
    return Pipeline(cfg or PipelineConfig(), steering, noise, block).run(keep_power)
