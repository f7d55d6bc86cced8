"""Synthetic arrays, free-field steering fields and multichannel test scenes."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .correlation import mean_correlation, read_dump, write_dump
from .errors import ConfigError, FileFormatError
from .frontend import SampleBlock, StftConfig, stft_array
from .gsvd import NoiseModel
from .music import SteeringField, unit_vectors


@dataclass
class ArrayGeometry:
    """Microphone positions ``(M, 3)`` in meters."""

    positions: np.ndarray
    speed_of_sound: float = 343.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        m = len(self.positions)
        if m < 2:
            raise ConfigError(f"geometry needs at least 2 microphones, got {m}")
        if not self.speed_of_sound > 0:
            raise ConfigError("speed_of_sound must be positive")
        gap = np.linalg.norm(self.positions[:, None] - self.positions[None], axis=-1)
        np.fill_diagonal(gap, np.inf)
        if gap.min() < 1e-9:
            raise ConfigError("microphone positions must be distinct")

    @property
    def m(self) -> int:
        return len(self.positions)

    def delays(self, directions) -> np.ndarray:
        """Arrival time offsets ``tau[theta, m] = -(u . p_m) / c`` in seconds."""
        return -(unit_vectors(directions) @ self.positions.T) / self.speed_of_sound

    def to_dict(self):
        return {"positions": self.positions.tolist(), "speed_of_sound": self.speed_of_sound}

    @classmethod
    def from_dict(cls, d) -> "ArrayGeometry":
        if isinstance(d, str):
            return preset(d)
        if "preset" in d:
            return preset(d["preset"], **{k: v for k, v in d.items() if k != "preset"})
        return cls(d["positions"], d.get("speed_of_sound", 343.0))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ArrayGeometry":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors on the sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def circular_array(n: int = 8, radius: float = 0.1, speed_of_sound: float = 343.0) -> ArrayGeometry:
    ang = 2 * np.pi * np.arange(n) / n
    pos = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)], axis=1)
    return ArrayGeometry(pos, speed_of_sound)


def spherical_array(n: int = 60, radius: float = 0.15, speed_of_sound: float = 343.0) -> ArrayGeometry:
    return ArrayGeometry(radius * fibonacci_sphere(n), speed_of_sound)


PRESETS = {
    "circular8": lambda **kw: circular_array(8, **kw),
    "sphere60": lambda **kw: spherical_array(60, **kw),
}


def preset(name: str, **kw) -> ArrayGeometry:
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise ConfigError(f"unknown geometry preset {name!r}; choose from {sorted(PRESETS)}") from None


def azimuth_grid(step: float = 5.0, elevation: float = 0.0) -> np.ndarray:
    az = np.arange(0.0, 360.0, step)
    return np.stack([az, np.full_like(az, elevation)], axis=1)


def sphere_grid(n: int = 2522) -> np.ndarray:
    """Fibonacci-lattice directions as (azimuth, elevation) in degrees; azimuth in [0, 360)."""
    u = fibonacci_sphere(n)
    az = np.rad2deg(np.arctan2(u[:, 1], u[:, 0])) % 360.0
    el = np.rad2deg(np.arcsin(np.clip(u[:, 2], -1.0, 1.0)))
    return np.stack([az, el], axis=1)


def direction_grid(name: str = "azimuth") -> np.ndarray:
    if name == "azimuth":
        return azimuth_grid()
    if name == "sphere":
        return sphere_grid()
    raise ConfigError(f"unknown direction grid {name!r}; choose 'azimuth' or 'sphere'")


def make_steering(geom: ArrayGeometry, directions, bins=None, cfg: StftConfig | None = None,
                  sample_rate: float = 16000.0) -> SteeringField:
    """Plane-wave response ``H_m = exp(-j 2 pi f tau_m)`` on a direction grid."""
    cfg = cfg or StftConfig()
    bins = cfg.bins if bins is None else np.asarray(bins)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
    freqs = bins * (sample_rate / cfg.frame_length)
    tau = geom.delays(directions)  # (D, M)
    H = np.exp(-2j * np.pi * freqs[None, :, None] * tau[:, None, :])
    return SteeringField(directions, bins, H, sample_rate, cfg.frame_length)


@dataclass
class SourceSpec:
    azimuth: float
    elevation: float = 0.0
    kind: str = "white"  # "white" or "tone"
    level_db: float = 0.0
    freq: float | None = None
    # "noise" sources are allowed in noise-capture scenes
    role: str = "target"

    def problems(self) -> list[str]:
        out = []
        if self.kind not in ("white", "tone"):
            out.append(f"source kind must be 'white' or 'tone', got {self.kind!r}")
        if self.kind == "tone" and not (self.freq and self.freq > 0):
            out.append("tone sources need a positive freq")
        if self.role not in ("target", "noise"):
            out.append(f"source role must be 'target' or 'noise', got {self.role!r}")
        return out


@dataclass
class SceneSpec:
    sources: list[SourceSpec] = field(default_factory=list)
    noise_db: float | None = None  # diffuse white noise level; None for none
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.sources = [s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in self.sources]
        problems = [p for s in self.sources for p in s.problems()]
        if not self.duration > 0:
            problems.append("scene duration must be > 0")
        if problems:
            raise ConfigError(problems)

    @property
    def targets(self) -> list[SourceSpec]:
        return [s for s in self.sources if s.role == "target"]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SceneSpec":
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _db(level):
    return 10.0 ** (level / 20.0)


def synthesize_scene(geom: ArrayGeometry, spec: SceneSpec, sample_rate: float = 16000.0) -> SampleBlock:
    """Delayed source signals plus i.i.d. Gaussian noise; samples are float32-representable.

    Source levels and ``noise_db`` are RMS levels in dB re 1.0, so SNR is their
    difference.  Fractional delays are applied as a phase ramp on a padded
    signal and the padding is cropped, which hides the circular wrap.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * sample_rate))
    out = np.zeros((geom.m, n))
    if spec.sources:
        dirs = np.array([[s.azimuth, s.elevation] for s in spec.sources])
        tau = geom.delays(dirs)  # (S, M)
        pad = int(np.ceil(np.abs(tau).max() * sample_rate)) + 16
        length = n + 2 * pad
        t = np.arange(length) / sample_rate
        freqs = np.fft.rfftfreq(length, 1.0 / sample_rate)
        for s, delay in zip(spec.sources, tau):
            if s.kind == "white":
                sig = rng.standard_normal(length) * _db(s.level_db)
            else:
                phase = rng.uniform(0.0, 2 * np.pi)
                sig = math.sqrt(2.0) * _db(s.level_db) * np.sin(2 * np.pi * s.freq * t + phase)
            spec_f = np.fft.rfft(sig)
            shifted = np.fft.irfft(spec_f[None] * np.exp(-2j * np.pi * freqs[None] * delay[:, None]),
                                   n=length, axis=1)
            out += shifted[:, pad : pad + n]
    if spec.noise_db is not None:
        out += rng.standard_normal((geom.m, n)) * _db(spec.noise_db)
    return SampleBlock(out.astype(np.float32).astype(np.float64), sample_rate)


def capture_noise_model(geom: ArrayGeometry, spec: SceneSpec, cfg: StftConfig | None = None,
                        sample_rate: float = 16000.0) -> NoiseModel:
    """Mean correlation of a noise-only scene over all of its frames.

    Sources marked ``role="noise"`` (directional interference) are allowed;
    target sources are not.
    """
    cfg = cfg or StftConfig()
    if spec.targets:
        raise ConfigError("noise capture scene must not contain target sources")
    block = synthesize_scene(geom, spec, sample_rate)
    return NoiseModel(mean_correlation(stft_array(block, cfg)))


def save_noise_model(path, model: NoiseModel):
    """Store ``K`` in the correlation dump format (one frame)."""
    write_dump(path, model.K, T=1)


def load_noise_model(path) -> NoiseModel:
    mats, _ = read_dump(path)
    if mats.shape[0] != 1:
        raise FileFormatError(f"{path}: noise model dump must hold exactly one frame")
    return NoiseModel(mats[0].astype(np.complex128))
