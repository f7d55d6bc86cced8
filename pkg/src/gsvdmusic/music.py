"""MUSIC spatial spectrum, frequency integration and direction peak search."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FileFormatError

STEER_MAGIC = b"SSLSTEER"
_STEER_DTYPES = {"complex64": "<c8", "complex128": "<c16"}

# bytes of the (D, bins, M-Ns) product processed at once
_CHUNK_BYTES = 1 << 25


@dataclass
class MusicConfig:
    num_sources: int = 2
    denominator_floor: float = 1e-12
    squared_denominator: bool = False
    neighbor_deg: float = 10.0
    # estimates below this multiple of the frame's median power are flagged
    low_power_ratio: float = 2.0

    def problems(self, m: int | None = None) -> list[str]:
        out = []
        if self.num_sources < 1:
            out.append("music.num_sources must be >= 1")
        if m is not None and self.num_sources >= m:
            out.append(f"music.num_sources must be < M ({m})")
        if not self.denominator_floor > 0:
            out.append("music.denominator_floor must be > 0")
        if not self.neighbor_deg > 0:
            out.append("music.neighbor_deg must be > 0")
        return out

    def validate(self, m: int | None = None):
        problems = self.problems(m)
        if problems:
            raise ConfigError(problems)


def unit_vectors(directions) -> np.ndarray:
    """``(D, 2)`` azimuth/elevation in degrees to ``(D, 3)`` unit vectors."""
    az, el = np.deg2rad(np.asarray(directions, dtype=np.float64)).T
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)


class SteeringField:
    """Array response ``H[theta, bin, mic]`` over a direction grid.

    ``directions`` holds (azimuth, elevation) in degrees, ``bins`` the STFT bin
    index of each column.
    """

    def __init__(self, directions, bins, H, sample_rate=16000.0, frame_length=512):
        self.directions = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
        self.bins = np.asarray(bins, dtype=np.int64)
        self.H = np.asarray(H)
        self.sample_rate = float(sample_rate)
        self.frame_length = int(frame_length)
        D = len(self.directions)
        if D < 1:
            raise ValueError("steering field needs at least one direction")
        if self.H.shape[:2] != (D, len(self.bins)):
            raise ValueError(f"H shape {self.H.shape} does not match {D} directions x {len(self.bins)} bins")
        if np.any(np.diff(self.bins) <= 0):
            raise ValueError("steering bins must be strictly increasing")
        if np.any(np.all(self.H == 0, axis=-1)):
            raise ValueError("steering field contains zero vectors")
        self._neighbors = {}
        self._conj = {}

    @property
    def m(self) -> int:
        return self.H.shape[2]

    @property
    def n_directions(self) -> int:
        return self.H.shape[0]

    def conj_by_bin(self, dtype) -> np.ndarray:
        """``conj(H)`` laid out as ``(bins, D, M)`` in ``dtype``, cached."""
        key = np.dtype(dtype).str
        if key not in self._conj:
            self._conj[key] = np.ascontiguousarray(self.H.conj().transpose(1, 0, 2), dtype=dtype)
        return self._conj[key]

    def neighbors(self, radius_deg=10.0) -> np.ndarray:
        """Padded ``(D, k)`` index array of grid neighbors within ``radius_deg``; -1 pads."""
        if radius_deg not in self._neighbors:
            u = unit_vectors(self.directions)
            near = u @ u.T >= np.cos(np.deg2rad(radius_deg)) - 1e-12
            np.fill_diagonal(near, False)
            deg = near.sum(axis=1)
            out = -np.ones((len(u), max(int(deg.max()), 1)), dtype=np.int64)
            for i, row in enumerate(near):
                idx = np.flatnonzero(row)
                out[i, : len(idx)] = idx
            self._neighbors[radius_deg] = out
        return self._neighbors[radius_deg]

    def save(self, path):
        """Binary file: magic, uint32 header length, JSON header, little-endian payload."""
        dtype = "complex64" if self.H.dtype == np.complex64 else "complex128"
        header = {
            "M": self.m,
            "D": self.n_directions,
            "bin_min": int(self.bins[0]),
            "bin_max": int(self.bins[-1]),
            "bins": self.bins.tolist(),
            "sample_rate": self.sample_rate,
            "frame_length": self.frame_length,
            "directions": self.directions.tolist(),
            "dtype": dtype,
            "layout": "direction,bin,mic",
        }
        blob = json.dumps(header).encode()
        with open(path, "wb") as fh:
            fh.write(STEER_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.H, dtype=_STEER_DTYPES[dtype]).tobytes())

    @classmethod
    def load(cls, path) -> "SteeringField":
        raw = Path(path).read_bytes()
        if raw[:8] != STEER_MAGIC:
            raise FileFormatError(f"{path}: not a steering field file")
        (n,) = struct.unpack_from("<I", raw, 8)
        try:
            header = json.loads(raw[12 : 12 + n])
            dt = _STEER_DTYPES[header["dtype"]]
            D, m = int(header["D"]), int(header["M"])
            bins = header.get("bins") or list(range(header["bin_min"], header["bin_max"] + 1))
        except (ValueError, KeyError) as exc:
            raise FileFormatError(f"{path}: bad steering header ({exc})") from exc
        payload = np.frombuffer(raw[12 + n :], dtype=dt)
        if payload.size != D * len(bins) * m:
            raise FileFormatError(f"{path}: payload has {payload.size} values, expected {D * len(bins) * m}")
        H = payload.reshape(D, len(bins), m).astype(np.complex128)
        return cls(header["directions"], bins, H, header.get("sample_rate", 16000.0),
                   header.get("frame_length", 512))

    def restrict(self, bins) -> "SteeringField":
        """Subset to the given bin indices (all of which must be present)."""
        bins = np.asarray(bins)
        pos = np.searchsorted(self.bins, bins)
        if np.any(pos >= len(self.bins)) or np.any(self.bins[np.minimum(pos, len(self.bins) - 1)] != bins):
            raise ConfigError("steering field does not cover the requested bins")
        return SteeringField(self.directions, bins, self.H[:, pos], self.sample_rate, self.frame_length)


@dataclass
class SourceEstimate:
    index: int
    azimuth: float
    elevation: float
    power: float
    rank: int
    low_power: bool = False

    def to_dict(self):
        return {
            "index": int(self.index),
            "azimuth": float(self.azimuth),
            "elevation": float(self.elevation),
            "power": float(self.power),
            "rank": int(self.rank),
            "low_power": bool(self.low_power),
        }


@dataclass
class MusicSpectrum:
    """``P[theta, bin]`` for one frame and its integral over bins ``pbar[theta]``."""

    P: np.ndarray
    pbar: np.ndarray
    frame: int = 0


def calc_average_power(E, H, cfg: MusicConfig) -> np.ndarray:
    """MUSIC power for every direction and bin.

    ``E`` holds left singular vectors, shape ``(n_bins, M, M)`` for one frame or
    ``(n_frames, n_bins, M, M)``; a :class:`~gsvdmusic.gsvd.GsvdResult` is also
    accepted.  Returns ``P`` with shape ``(D, n_bins)`` or ``(n_frames, D, n_bins)``,
    computed in the precision of ``E``.

    The denominator sums the magnitudes ``|H^H e_i|`` over the noise vectors
    ``i = N_s+1..M``; with ``squared_denominator`` it sums their squares instead.
    """
    E = getattr(E, "E", E)
    E = np.asarray(E)
    single = E.ndim == 3
    if single:
        E = E[None]
    n_frames, n_bins, m, _ = E.shape
    cfg.validate(m)
    Hc = H.conj_by_bin(E.dtype) if isinstance(H, SteeringField) else \
        np.ascontiguousarray(np.asarray(H).conj().transpose(1, 0, 2), dtype=E.dtype)
    if Hc.shape[0] != n_bins or Hc.shape[2] != m:
        raise ConfigError(f"steering field has {Hc.shape[0]} bins x M={Hc.shape[2]}, "
                          f"decomposition has {n_bins} bins x M={m}")
    D = Hc.shape[1]
    rtype = E.real.dtype
    num = np.sum(Hc.real ** 2 + Hc.imag ** 2, axis=-1)  # (bins, D)
    floor = rtype.type(cfg.denominator_floor)
    n_noise = m - cfg.num_sources
    step = max(1, _CHUNK_BYTES // max(1, D * n_noise * E.itemsize))
    P = np.empty((n_frames, D, n_bins), dtype=rtype)
    for f in range(n_frames):
        En = E[f, :, :, cfg.num_sources :]
        for b0 in range(0, n_bins, step):
            sl = slice(b0, b0 + step)
            proj = np.abs(Hc[sl] @ En[sl])  # (b, D, n_noise)
            if cfg.squared_denominator:
                den = np.sum(proj * proj, axis=-1)
            else:
                den = np.sum(proj, axis=-1)
            P[f, :, sl] = (num[sl] / np.maximum(den, floor)).T
    return P[0] if single else P


def integrate_bins(P, bins, w_min, w_max) -> np.ndarray:
    """Sum ``P[..., theta, bin]`` over bins with ``w_min <= bin <= w_max``."""
    bins = np.asarray(bins)
    sel = (bins >= w_min) & (bins <= w_max)
    if w_min > w_max or not sel.any():
        raise ValueError(f"empty bin range [{w_min}, {w_max}]")
    return np.asarray(P)[..., sel].sum(axis=-1)


def local_maxima(pbar, neighbors) -> np.ndarray:
    """Mask of directions whose power is >= every neighbor's."""
    pbar = np.asarray(pbar)
    vals = np.where(neighbors >= 0, pbar[np.maximum(neighbors, 0)], -np.inf)
    return pbar >= vals.max(axis=1)


def peak_search(pbar, H: SteeringField, cfg: MusicConfig) -> list[SourceEstimate]:
    """Top ``N_s`` local maxima of ``pbar`` by power; ties go to the lowest index."""
    pbar = np.asarray(pbar)
    if pbar.shape != (H.n_directions,):
        raise ValueError(f"pbar has shape {pbar.shape}, expected ({H.n_directions},)")
    cand = np.flatnonzero(local_maxima(pbar, H.neighbors(cfg.neighbor_deg)))
    order = cand[np.lexsort((cand, -pbar[cand]))][: cfg.num_sources]
    med = float(np.median(pbar))
    out = []
    for rank, idx in enumerate(order):
        az, el = H.directions[idx]
        p = float(pbar[idx])
        out.append(SourceEstimate(int(idx), float(az), float(el), p, rank,
                                  low_power=p < cfg.low_power_ratio * med))
    return out


def write_pbar_csv(path, frames, pbar, directions):
    """Long-format CSV: frame, direction index, azimuth, elevation, power."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "index", "azimuth", "elevation", "power"])
        for f, row in zip(frames, pbar):
            for i, (p, (az, el)) in enumerate(zip(row, directions)):
                w.writerow([int(f), i, repr(float(az)), repr(float(el)), repr(float(p))])


def write_estimates_json(path, frames, estimates):
    records = [{"frame": int(f), "estimates": [e.to_dict() for e in est]}
               for f, est in zip(frames, estimates)]
    Path(path).write_text(json.dumps(records, indent=1))
