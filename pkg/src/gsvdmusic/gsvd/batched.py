"""Data-parallel drivers for the per-bin kernels.

Each stage is a separate parallel loop over the dimension it is independent in:
the batch axis for the inherently sequential stages, batch x M x M for the
elementwise ones, batch x M plus a per-item max reduction for the tolerance.
``solve_sequential`` runs the same kernels one item after another.
"""

import warnings

import numpy as np
from numba import njit, prange

from . import kernels as k

# numba probes TBB first and warns when it is too old, then uses another layer
warnings.filterwarnings("ignore", message="The TBB threading layer", module="numba")

_PAR = dict(parallel=True, cache=True)


@njit(**_PAR)
def inverse_batch(K, out, partial, eps, ok):
    for b in prange(K.shape[0]):
        ok[b] = k.inverse_bin(K[b], out[b], partial, eps)


@njit(**_PAR)
def matmul_batch(X, xidx, Y, out):
    n, m, p = out.shape
    for t in prange(n * m * p):
        b = t // (m * p)
        i = (t // p) % m
        j = t % p
        out[b, i, j] = k.matmul_entry(X[xidx[b]], Y[b], i, j)


@njit(**_PAR)
def bidiag_batch(A, d, e, hl, tl, pl, hr, tr, pr):
    for b in prange(A.shape[0]):
        k.bidiag_bin(A[b], d[b], e[b], hl[b], tl[b], pl[b], hr[b], tr[b], pr[b])


@njit(**_PAR)
def tolerance_batch(d, e, eps, scale, out):
    n, m = d.shape
    sums = np.empty((n, m), dtype=d.dtype)
    for t in prange(n * m):
        b = t // m
        j = t % m
        sums[b, j] = k.column_sum(d[b], e[b], j)
    for b in prange(n):
        best = sums[b, 0]
        for j in range(1, m):
            if sums[b, j] > best:
                best = sums[b, j]
        out[b] = scale * eps * best


@njit(**_PAR)
def identity_batch(out):
    n, m, _ = out.shape
    for t in prange(n * m * m):
        b = t // (m * m)
        i = (t // m) % m
        j = t % m
        k.identity_entry(out[b], i, j)


@njit(**_PAR)
def qr_batch(d, e, E, Er, tol, max_sweeps, eps, sweeps, conv):
    for b in prange(d.shape[0]):
        s, c = k.qr_bin(d[b], e[b], E[b], Er[b], tol[b], max_sweeps, eps)
        sweeps[b] = s
        conv[b] = c


@njit(**_PAR)
def sort_batch(d, E, Er, perm):
    for b in prange(d.shape[0]):
        perm[b] = k.sort_bin(d[b], E[b], Er[b])


@njit(**_PAR)
def back_transform_batch(hl, tl, pl, hr, tr, pr, Eq, Erq, E, Er):
    n, m, _ = E.shape
    for b in prange(n):
        for i in range(m):
            for j in range(m):
                E[b, i, j] = Eq[b, i, j]
                Er[b, i, j] = Erq[b, i, j]
        k.back_transform_bin(hl[b], tl[b], pl[b], hr[b], tr[b], pr[b], E[b], Er[b])


@njit(**_PAR)
def canonical_batch(sigma, E, Er, Z, null_tol):
    for b in prange(sigma.shape[0]):
        k.canonical_null_bin(sigma[b], E[b], Er[b], Z, null_tol)
        k.canonical_phase_bin(E[b], Er[b])


@njit(cache=True)
def solve_sequential(Kinv, kidx, R, sigma, E, Er, Z, eps, tol_scale, max_sweeps, null_tol,
                     sweeps, conv):
    for b in range(R.shape[0]):
        s, c = k.solve_bin(Kinv[kidx[b]], R[b], sigma[b], E[b], Er[b], Z, eps, tol_scale,
                           max_sweeps, null_tol)
        sweeps[b] = s
        conv[b] = c
