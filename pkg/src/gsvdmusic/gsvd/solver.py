"""Batched per-bin solution of ``K^-1 R = E diag(sigma) Er``.

The fast path runs eight stages over a whole batch of bins (and frames):
Gauss-Jordan inverse of the noise model, the product ``A = K^-1 R``, Householder
bidiagonalization with phase correction, the convergence tolerance, identity
initialization of the singular-vector accumulators, implicit-shift QR sweeps,
a descending sort and the back transformation.  ``gsvd_reference`` is an
independent double-precision Jacobi solve of the same problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConfigError, NumericalError, SingularMatrixError
from . import batched, kernels
from .reference import MAX_SWEEPS, jacobi_batch

PRECISIONS = {"single": (np.complex64, np.float32), "double": (np.complex128, np.float64)}
PATHS = ("naive", "batched", "reference")


@dataclass
class SolverConfig:
    max_qr_sweeps: int | None = None  # None means 30 * M
    tolerance_scale: float = 0.1
    pivoting: str = "partial"
    null_tol: float = 1e-5

    def problems(self) -> list[str]:
        out = []
        if self.max_qr_sweeps is not None and self.max_qr_sweeps < 1:
            out.append("solver.max_qr_sweeps must be >= 1")
        if not self.tolerance_scale > 0:
            out.append("solver.tolerance_scale must be > 0")
        if self.pivoting not in ("none", "partial"):
            out.append("solver.pivoting must be 'none' or 'partial'")
        if self.null_tol < 0:
            out.append("solver.null_tol must be >= 0")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def sweeps_for(self, m: int) -> int:
        return 30 * m if self.max_qr_sweeps is None else int(self.max_qr_sweeps)


@dataclass
class GsvdResult:
    """Per-item factors with ``A = E @ diag(sigma) @ Er``; leading axis is the batch."""

    sigma: np.ndarray
    E: np.ndarray
    Er: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    fallback: np.ndarray = None

    def __post_init__(self):
        if self.fallback is None:
            self.fallback = np.zeros(len(self.sigma), dtype=bool)

    def __len__(self):
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.E * self.sigma[:, None, :]) @ self.Er

    def astype(self, ctype) -> "GsvdResult":
        rtype = np.zeros(0, ctype).real.dtype
        return GsvdResult(self.sigma.astype(rtype), self.E.astype(ctype), self.Er.astype(ctype),
                          self.iterations, self.converged, self.fallback)

    def take(self, idx) -> "GsvdResult":
        return GsvdResult(self.sigma[idx], self.E[idx], self.Er[idx], self.iterations[idx],
                          self.converged[idx], self.fallback[idx])


class NoiseModel:
    """Per-bin Hermitian positive definite noise correlation ``K``.

    Positive definiteness is checked on construction with a double-precision
    eigenvalue solve.  Inverses are cached per (precision, pivoting).
    """

    def __init__(self, K):
        K = np.asarray(K, dtype=np.complex128)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[1] != K.shape[2]:
            raise ValueError("noise model must have shape (n_bins, M, M)")
        if not np.all(np.isfinite(K)):
            raise SingularMatrixError("noise model has non-finite entries")
        herm = np.abs(K - K.conj().swapaxes(1, 2)).max(axis=(1, 2))
        scale = np.abs(K).max(axis=(1, 2))
        bad = np.flatnonzero(herm > 1e-5 * np.maximum(scale, 1e-300))
        if bad.size:
            raise SingularMatrixError(f"noise model is not Hermitian in bins {bad.tolist()}", bad)
        w = np.linalg.eigvalsh(0.5 * (K + K.conj().swapaxes(1, 2)))
        m = K.shape[1]
        floor = m * np.finfo(np.float64).eps * np.maximum(w[:, -1], 0)
        bad = np.flatnonzero(~(w[:, 0] > floor))
        if bad.size:
            raise SingularMatrixError(
                f"noise model is singular or not positive definite in bins {bad.tolist()}", bad)
        self.K = K
        self._inverse = {}

    @classmethod
    def identity(cls, m: int, n_bins: int) -> "NoiseModel":
        return cls(np.broadcast_to(np.eye(m), (n_bins, m, m)).copy())

    @property
    def m(self) -> int:
        return self.K.shape[1]

    @property
    def n_bins(self) -> int:
        return self.K.shape[0]

    def inverse(self, precision="single", pivoting="partial") -> np.ndarray:
        key = (precision, pivoting)
        if key not in self._inverse:
            self._inverse[key] = mat_inverse(self.K, precision, pivoting)
        return self._inverse[key]


@lru_cache(maxsize=None)
def canonical_probe(m: int) -> np.ndarray:
    """Fixed complex matrix used to pick a canonical basis for null clusters."""
    rng = np.random.default_rng(0x5EED + m)
    z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    z.setflags(write=False)
    return z


def _types(precision):
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}") from None


# -- individual stages (batched) -------------------------------------------------

def mat_inverse(K, precision="single", pivoting="partial") -> np.ndarray:
    """Gauss-Jordan inverse of each ``(M, M)`` matrix in ``K``."""
    ctype, rtype = _types(precision)
    K = np.ascontiguousarray(np.asarray(K), dtype=ctype)
    if K.ndim == 2:
        K = K[None]
    out = np.empty_like(K)
    ok = np.zeros(K.shape[0], dtype=np.bool_)
    batched.inverse_batch(K, out, pivoting == "partial", np.finfo(rtype).eps, ok)
    if not ok.all():
        bad = np.flatnonzero(~ok)
        raise SingularMatrixError(f"singular pivot in Gaussian elimination for bins {bad.tolist()}",
                                  bad)
    return out


def mat_mul(Kinv, R, kidx=None) -> np.ndarray:
    """``A[b] = Kinv[kidx[b]] @ R[b]``, each output element computed independently."""
    Kinv = np.ascontiguousarray(Kinv)
    R = np.ascontiguousarray(R, dtype=Kinv.dtype)
    if kidx is None:
        kidx = np.arange(R.shape[0])
    out = np.empty_like(R)
    batched.matmul_batch(Kinv, np.asarray(kidx, dtype=np.int64), R, out)
    return out


@dataclass
class Bidiagonal:
    """Real bidiagonal ``(d, e)`` plus the retained Householder and phase factors."""

    d: np.ndarray
    e: np.ndarray
    hl: np.ndarray
    tl: np.ndarray
    pl: np.ndarray
    hr: np.ndarray
    tr: np.ndarray
    pr: np.ndarray

    def matrix(self) -> np.ndarray:
        n, m = self.d.shape
        B = np.zeros((n, m, m), dtype=self.d.dtype)
        idx = np.arange(m)
        B[:, idx, idx] = self.d
        B[:, idx[:-1], idx[1:]] = self.e[:, : m - 1]
        return B

    def left(self) -> np.ndarray:
        """Explicit ``QL`` with ``A = QL @ B @ QR^H``."""
        n, m = self.d.shape
        E = np.broadcast_to(np.eye(m, dtype=self.hl.dtype), (n, m, m)).copy()
        Er = np.broadcast_to(np.eye(m, dtype=self.hl.dtype), (n, m, m)).copy()
        back_transform_factors(self, E, Er)
        return E

    def right(self) -> np.ndarray:
        """Explicit ``QR`` with ``A = QL @ B @ QR^H``."""
        n, m = self.d.shape
        E = np.broadcast_to(np.eye(m, dtype=self.hl.dtype), (n, m, m)).copy()
        Er = np.broadcast_to(np.eye(m, dtype=self.hl.dtype), (n, m, m)).copy()
        back_transform_factors(self, E, Er)
        return Er.conj().swapaxes(1, 2)


def bidiagonalize(A) -> Bidiagonal:
    A = np.ascontiguousarray(A)
    if A.ndim == 2:
        A = A[None]
    rtype = A.real.dtype
    n, m, _ = A.shape
    bd = Bidiagonal(
        d=np.empty((n, m), rtype), e=np.zeros((n, max(m - 1, 1)), rtype),
        hl=np.empty_like(A), tl=np.empty((n, m), rtype), pl=np.empty((n, m), A.dtype),
        hr=np.empty_like(A), tr=np.empty((n, m), rtype), pr=np.empty((n, m), A.dtype),
    )
    batched.bidiag_batch(A, bd.d, bd.e, bd.hl, bd.tl, bd.pl, bd.hr, bd.tr, bd.pr)
    return bd


def compute_tolerance(d, e, tolerance_scale=1.0) -> np.ndarray:
    """``scale * eps * max_j(|d_j| + |e_{j-1}|)`` per item, eps of the working precision."""
    d = np.ascontiguousarray(d)
    if d.ndim == 1:
        d = d[None]
        e = np.asarray(e)[None]
    rtype = d.dtype
    e = np.ascontiguousarray(e, dtype=rtype)
    if e.shape[1] == 0:
        e = np.zeros((d.shape[0], 1), rtype)
    out = np.empty(d.shape[0], rtype)
    batched.tolerance_batch(d, e, rtype.type(np.finfo(rtype).eps), rtype.type(tolerance_scale), out)
    return out


def init_vectors(m: int, n_bins: int, dtype=np.complex64):
    """Identity-initialized ``(E, Er)`` for every bin."""
    if m < 1:
        raise ValueError("M must be >= 1")
    E = np.empty((n_bins, m, m), dtype)
    Er = np.empty((n_bins, m, m), dtype)
    batched.identity_batch(E)
    batched.identity_batch(Er)
    return E, Er


def qr_iterate(d, e, E, Er, tol, max_sweeps):
    """Implicit-shift QR on each bidiagonal, in place.  Returns ``(sweeps, converged)``.

    Rotations are accumulated so that ``B_in = E @ diag(d_out) @ Er`` per item.
    """
    n = d.shape[0]
    sweeps = np.zeros(n, np.int64)
    conv = np.zeros(n, np.bool_)
    rtype = d.dtype
    tol = np.ascontiguousarray(np.broadcast_to(tol, (n,)), dtype=rtype)
    batched.qr_batch(d, e, E, Er, tol, int(max_sweeps), rtype.type(np.finfo(rtype).eps),
                     sweeps, conv)
    return sweeps, conv


def sort_descending(values, E, Er):
    """Stable descending sort, permuting columns of ``E`` and rows of ``Er`` in place."""
    values = np.ascontiguousarray(values)
    perm = np.empty(values.shape, np.int64)
    batched.sort_batch(values, E, Er, perm)
    return values, E, Er, perm


def back_transform_factors(bd: Bidiagonal, E, Er):
    batched.back_transform_batch(bd.hl, bd.tl, bd.pl, bd.hr, bd.tr, bd.pr,
                                 E.copy(), Er.copy(), E, Er)
    return E, Er


def back_transform(E, Er, bd: Bidiagonal):
    """Compose the QR accumulators with the retained factors: ``QL @ E`` and ``Er @ QR^H``."""
    ctype = bd.hl.dtype
    Eo = np.empty(E.shape, ctype)
    Ero = np.empty(Er.shape, ctype)
    batched.back_transform_batch(bd.hl, bd.tl, bd.pl, bd.hr, bd.tr, bd.pr,
                                 np.ascontiguousarray(E), np.ascontiguousarray(Er), Eo, Ero)
    return Eo, Ero


def canonicalize(sigma, E, Er, null_tol=1e-5):
    """Canonical basis for the null cluster, then unit-phase normalization of columns."""
    m = E.shape[-1]
    Z = np.ascontiguousarray(canonical_probe(m), dtype=E.dtype)
    rtype = sigma.dtype
    batched.canonical_batch(sigma, E, Er, Z, rtype.type(null_tol))
    return E, Er


# -- whole solve -------------------------------------------------------------------

def _as_batch(R):
    R = np.asarray(R)
    if R.ndim == 2:
        R = R[None]
    if R.ndim != 3 or R.shape[1] != R.shape[2]:
        raise ValueError("correlation input must have shape (n, M, M)")
    return R


def _staged(Kinv, kidx, R, cfg, rtype):
    n, m, _ = R.shape
    eps = rtype(np.finfo(rtype).eps)
    A = mat_mul(Kinv, R, kidx)
    bd = bidiagonalize(A)
    tol = compute_tolerance(bd.d, bd.e, cfg.tolerance_scale)
    Eq = np.empty((n, m, m), rtype)
    Erq = np.empty((n, m, m), rtype)
    batched.identity_batch(Eq)
    batched.identity_batch(Erq)
    sweeps = np.zeros(n, np.int64)
    conv = np.zeros(n, np.bool_)
    batched.qr_batch(bd.d, bd.e, Eq, Erq, tol, cfg.sweeps_for(m), eps, sweeps, conv)
    perm = np.empty((n, m), np.int64)
    batched.sort_batch(bd.d, Eq, Erq, perm)
    E, Er = back_transform(Eq, Erq, bd)
    canonicalize(bd.d, E, Er, cfg.null_tol)
    return GsvdResult(bd.d, E, Er, sweeps, conv)


def _sequential(Kinv, kidx, R, cfg, rtype):
    n, m, _ = R.shape
    sigma = np.empty((n, m), rtype)
    E = np.empty_like(R)
    Er = np.empty_like(R)
    sweeps = np.zeros(n, np.int64)
    conv = np.zeros(n, np.bool_)
    Z = np.ascontiguousarray(canonical_probe(m), dtype=R.dtype)
    batched.solve_sequential(Kinv, np.asarray(kidx, np.int64), R, sigma, E, Er, Z,
                             rtype(np.finfo(rtype).eps), rtype(cfg.tolerance_scale),
                             cfg.sweeps_for(m), rtype(cfg.null_tol), sweeps, conv)
    return GsvdResult(sigma, E, Er, sweeps, conv)


def solve_products(Kinv, R, kidx=None, cfg: SolverConfig | None = None, path="batched",
                   precision="single") -> GsvdResult:
    """Solve for ``Kinv[kidx[b]] @ R[b]`` given already-inverted noise matrices."""
    cfg = cfg or SolverConfig()
    cfg.validate()
    ctype, rtype = _types(precision)
    R = np.ascontiguousarray(_as_batch(R), dtype=ctype)
    Kinv = np.ascontiguousarray(_as_batch(Kinv), dtype=ctype)
    if kidx is None:
        if Kinv.shape[0] not in (1, R.shape[0]):
            raise ValueError("need kidx when Kinv and R batch sizes differ")
        kidx = np.zeros(R.shape[0], np.int64) if Kinv.shape[0] == 1 else np.arange(R.shape[0])
    if not np.all(np.isfinite(R)):
        raise NumericalError("non-finite correlation matrix")
    if path == "batched":
        res = _staged(Kinv, kidx, R, cfg, rtype)
    elif path == "naive":
        res = _sequential(Kinv, kidx, R, cfg, rtype)
    elif path == "reference":
        A = np.einsum("bij,bjk->bik", Kinv.astype(np.complex128)[kidx], R.astype(np.complex128))
        return reference_solve(A, cfg.null_tol)
    else:
        raise ConfigError(f"path must be one of {PATHS}")
    bad = np.flatnonzero(~res.converged)
    if bad.size:
        A = np.einsum("bij,bjk->bik", Kinv[kidx[bad]].astype(np.complex128),
                      R[bad].astype(np.complex128))
        ref = reference_solve(A, cfg.null_tol)
        res.sigma[bad] = ref.sigma
        res.E[bad] = ref.E
        res.Er[bad] = ref.Er
        res.fallback[bad] = True
    return res


def gsvd(K, R, cfg: SolverConfig | None = None, path="batched", precision="single",
         kidx=None) -> GsvdResult:
    """Solve ``K^-1 R = E diag(sigma) Er`` for every bin.

    ``K`` is a :class:`NoiseModel` or an ``(n_bins, M, M)`` array; ``R`` has shape
    ``(n, M, M)`` where item ``b`` uses noise bin ``kidx[b]`` (default: the same
    index, or bin 0 for a single noise matrix).  ``path`` selects the staged
    parallel solver, the one-item-at-a-time solver or the Jacobi reference.
    """
    cfg = cfg or SolverConfig()
    cfg.validate()
    if not isinstance(K, NoiseModel):
        K = NoiseModel(K)
    R = _as_batch(R)
    if K.m != R.shape[1]:
        raise ConfigError(f"noise model has M={K.m} but correlation has M={R.shape[1]}")
    if path == "reference":
        if kidx is None:
            kidx = np.zeros(R.shape[0], np.int64) if K.n_bins == 1 else np.arange(R.shape[0])
        A = np.linalg.solve(K.K[kidx], R.astype(np.complex128))
        return reference_solve(A, cfg.null_tol)
    Kinv = K.inverse(precision, cfg.pivoting)
    return solve_products(Kinv, R, kidx, cfg, path, precision)


def reference_solve(A, null_tol=1e-5) -> GsvdResult:
    """Jacobi SVD of explicit products ``A`` (double precision), sorted and canonicalized."""
    A = np.ascontiguousarray(_as_batch(A), dtype=np.complex128)
    n, m, _ = A.shape
    sigma = np.empty((n, m))
    E = np.empty_like(A)
    Er = np.empty_like(A)
    sweeps = np.zeros(n, np.int64)
    jacobi_batch(A, sigma, E, Er, sweeps, MAX_SWEEPS)
    perm = np.empty((n, m), np.int64)
    batched.sort_batch(sigma, E, Er, perm)
    canonicalize(sigma, E, Er, null_tol)
    return GsvdResult(sigma, E, Er, sweeps, sweeps < MAX_SWEEPS)


def gsvd_reference(K, R, null_tol=1e-5, kidx=None) -> GsvdResult:
    return gsvd(K, R, SolverConfig(null_tol=null_tol), path="reference", kidx=kidx)
