"""Instantaneous and windowed spatial correlation matrices.

``R_ins(w, f) = X(w, f) X(w, f)^H`` for every bin, and the moving mean of the
last ``T`` of them.  Matrices are stored as arrays of shape ``(n_bins, M, M)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError

DUMP_MAGIC = b"SSLCORR1"
_HEADER = struct.Struct("<8sIII")

RECOMPUTE_EVERY = 1000


def add_correlation(frame) -> np.ndarray:
    """Outer products ``X X^H`` for each bin of a frame.

    ``frame`` is a :class:`~gsvdmusic.frontend.SpectrumFrame` or an array of
    shape ``(n_bins, M)``.
    """
    x = np.asarray(getattr(frame, "data", frame))
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in spectrum frame")
    if not np.iscomplexobj(x):
        return x[:, :, None] * x[:, None, :]
    # explicit real arithmetic: exact diagonal, no fused multiply-add differences
    xr, xi = x.real, x.imag
    re = xr[:, :, None] * xr[:, None, :] + xi[:, :, None] * xi[:, None, :]
    im = xi[:, :, None] * xr[:, None, :] - xr[:, :, None] * xi[:, None, :]
    return re + 1j * im if x.dtype == np.complex128 else (re + 1j * im).astype(x.dtype)


class CorrelationWindow:
    """Moving average of the last ``T`` instantaneous correlation sets.

    Only the spectrum vectors are kept in the ring (each ``R_ins`` is rank one);
    the running sum is updated by adding the newest and subtracting the evicted
    outer product, and rebuilt from the ring every ``RECOMPUTE_EVERY`` pushes.
    """

    def __init__(self, T: int):
        if T < 1:
            raise ValueError(f"window length T must be >= 1, got {T}")
        self.T = int(T)
        self._ring = None
        self._sum = None
        self._count = 0
        self._pushes = 0

    def __len__(self):
        return min(self._count, self.T)

    @property
    def full(self) -> bool:
        return self._count >= self.T

    def push(self, frame):
        x = np.asarray(getattr(frame, "data", frame), dtype=np.complex128)
        rins = add_correlation(x)
        if self._ring is None:
            self._ring = np.zeros((self.T,) + x.shape, dtype=np.complex128)
            self._sum = np.zeros_like(rins)
        elif x.shape != self._ring.shape[1:]:
            raise ValueError(f"frame shape {x.shape} != window shape {self._ring.shape[1:]}")
        slot = self._count % self.T
        if self._count >= self.T:
            old = self._ring[slot]
            self._sum -= old[:, :, None] * old[:, None, :].conj()
        self._ring[slot] = x
        self._sum += rins
        self._count += 1
        self._pushes += 1
        if self._pushes % RECOMPUTE_EVERY == 0:
            self._recompute()

    def _recompute(self):
        n = len(self)
        live = self._ring[:n]
        self._sum = np.einsum("tbm,tbn->bmn", live, live.conj())

    def normalize(self) -> np.ndarray:
        return normalize_correlation(self)


def normalize_correlation(window: CorrelationWindow) -> np.ndarray:
    """Mean of the ``T`` most recent correlation sets, Hermitian by construction."""
    if not window.full:
        raise ValueError(f"window underfilled: {len(window)} of {window.T} frames accumulated")
    r = window._sum / window.T
    return 0.5 * (r + r.conj().swapaxes(-1, -2))


def windowed_correlations(spectra, T: int):
    """Yield ``(frame_index, R)`` for each frame once the window has filled.

    Frames ``0 .. T-2`` produce no output.
    """
    win = CorrelationWindow(T)
    for f, x in enumerate(spectra):
        win.push(x)
        if win.full:
            yield f, normalize_correlation(win)


def mean_correlation(spectra) -> np.ndarray:
    """Mean outer product over every frame of a ``(n_frames, n_bins, M)`` array."""
    spectra = np.asarray(spectra)
    return np.einsum("tbm,tbn->bmn", spectra, spectra.conj()) / spectra.shape[0]


def write_dump(path, mats, T: int = 1):
    """Write correlation tensors in the binary dump format.

    Header: magic ``SSLCORR1``, then little-endian uint32 ``M``, bin count and
    ``T``.  Payload: row-major ``(frames, bins, M, M)`` complex values as
    interleaved float32 re/im.  A 3-D input is written as a single frame.
    """
    mats = np.asarray(mats)
    if mats.ndim == 3:
        mats = mats[None]
    if mats.ndim != 4 or mats.shape[-1] != mats.shape[-2]:
        raise ValueError("expected (frames, bins, M, M) or (bins, M, M)")
    _, n_bins, m, _ = mats.shape
    payload = np.ascontiguousarray(mats, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, m, n_bins, int(T)))
        fh.write(payload.astype("<c8").tobytes())


def read_dump(path):
    """Read a dump; returns ``(mats, T)`` with ``mats`` of shape ``(frames, bins, M, M)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, m, n_bins, T = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size :]
    per_frame = n_bins * m * m * 8
    if per_frame == 0 or len(body) % per_frame:
        raise FileFormatError(f"{path}: payload size {len(body)} is not a multiple of {per_frame}")
    mats = np.frombuffer(body, dtype="<c8").reshape(-1, n_bins, m, m)
    return mats.astype(np.complex64), int(T)
