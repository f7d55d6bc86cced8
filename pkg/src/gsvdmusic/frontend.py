"""Multichannel audio ingest and short-time Fourier transform."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import AudioError, ConfigError

WINDOWS = {"hann": "hann", "hamming": "hamming", "rectangular": "boxcar"}


@dataclass
class SampleBlock:
    """Real-valued multichannel samples, shape ``(channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise AudioError("samples must be a 2-D (channels, n_samples) array")
        if self.samples.shape[0] < 2:
            raise AudioError(f"need at least 2 channels, got {self.samples.shape[0]}")
        if not self.sample_rate > 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class StftConfig:
    frame_length: int = 512
    shift: int = 160
    window: str = "hann"
    bin_min: int = 16
    bin_max: int = 88

    def problems(self) -> list[str]:
        out = []
        if self.frame_length <= 0:
            out.append("stft.frame_length must be positive")
        if not 0 < self.shift <= self.frame_length:
            out.append("stft.shift must satisfy 0 < shift <= frame_length")
        if self.window not in WINDOWS:
            out.append(f"stft.window must be one of {sorted(WINDOWS)}")
        if not 0 <= self.bin_min <= self.bin_max <= self.frame_length // 2:
            out.append("stft.bin_min/bin_max must satisfy 0 <= bin_min <= bin_max <= frame_length/2")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @property
    def n_bins(self) -> int:
        return self.bin_max - self.bin_min + 1

    @property
    def bins(self) -> np.ndarray:
        return np.arange(self.bin_min, self.bin_max + 1)

    def bin_frequencies(self, sample_rate: float) -> np.ndarray:
        return self.bins * (sample_rate / self.frame_length)

    @classmethod
    def for_range(cls, sample_rate=16000.0, f_low=500.0, n_bins=73, **kw):
        """Config whose first retained bin is the one nearest ``f_low``."""
        cfg = cls(**kw)
        cfg.bin_min = int(round(f_low * cfg.frame_length / sample_rate))
        cfg.bin_max = cfg.bin_min + n_bins - 1
        return cfg


@dataclass
class SpectrumFrame:
    """STFT coefficients of one frame; ``data`` has shape ``(n_bins, channels)``."""

    frame_index: int
    bins: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(self.bins):
            raise ValueError("data must have shape (n_bins, channels)")
        if np.any(np.diff(self.bins) <= 0):
            raise ValueError("bin indices must be strictly increasing")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"non-finite spectrum values in frame {self.frame_index}")


def load_audio(path) -> SampleBlock:
    """Read a multichannel PCM WAV file, scaling integer samples into [-1, 1]."""
    path = Path(path)
    try:
        sample_rate, data = scipy.io.wavfile.read(path)
    except FileNotFoundError as exc:
        raise AudioError(f"cannot read {path}: no such file") from exc
    except (ValueError, OSError) as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc
    if data.ndim == 1:
        raise AudioError(f"{path}: need at least 2 channels, got 1")
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM is returned left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample encoding {data.dtype}")
    return SampleBlock(np.ascontiguousarray(x.T), float(sample_rate))


def save_audio(path, block: SampleBlock):
    """Write ``block`` as a 32-bit float WAV (exact for float32-representable samples)."""
    if block.sample_rate != int(block.sample_rate):
        raise AudioError("WAV output needs an integer sample rate")
    scipy.io.wavfile.write(Path(path), int(block.sample_rate), block.samples.T.astype(np.float32))


def stft_array(block: SampleBlock, cfg: StftConfig) -> np.ndarray:
    """Windowed DFT of every frame; returns shape ``(n_frames, n_bins, channels)``.

    No scaling is applied on the forward transform.
    """
    cfg.validate()
    n = block.n_samples
    if n < cfg.frame_length:
        raise AudioError(f"block has {n} samples, shorter than one frame ({cfg.frame_length})")
    n_frames = (n - cfg.frame_length) // cfg.shift + 1
    window = scipy.signal.get_window(WINDOWS[cfg.window], cfg.frame_length)
    frames = np.lib.stride_tricks.sliding_window_view(block.samples, cfg.frame_length, axis=1)
    frames = frames[:, :: cfg.shift][:, :n_frames]  # (M, F, L)
    spec = np.fft.rfft(frames * window, axis=-1)[..., cfg.bin_min : cfg.bin_max + 1]
    return np.ascontiguousarray(spec.transpose(1, 2, 0))


def stft(block: SampleBlock, cfg: StftConfig) -> list[SpectrumFrame]:
    bins = cfg.bins
    return [SpectrumFrame(f, bins, x) for f, x in enumerate(stft_array(block, cfg))]


def frames_to_json(frames, path):
    """Debug dump: one record per frame with interleaved re/im per bin."""
    records = []
    for fr in frames:
        inter = np.stack([fr.data.real, fr.data.imag], axis=-1).reshape(len(fr.bins), -1)
        records.append(
            {
                "frame": int(fr.frame_index),
                "bins": {str(int(b)): row.tolist() for b, row in zip(fr.bins, inter)},
            }
        )
    Path(path).write_text(json.dumps(records))
