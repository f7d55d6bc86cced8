"""Double-precision one-sided Jacobi SVD, the ground truth for the fast solver.

The rotations are applied to the columns of ``A^H``.  The accumulated unitary
rotation matrix then holds the left singular vectors of ``A`` directly, so the
left basis is complete even when ``A`` is rank deficient.
"""

import numpy as np
from numba import njit, prange

MAX_SWEEPS = 80


@njit(cache=True, nogil=True)
def jacobi_bin(A, sigma, E, Er, max_sweeps):
    """``A = E @ diag(sigma) @ Er`` (unsorted); returns the number of sweeps."""
    m = A.shape[0]
    eps = np.finfo(np.float64).eps
    tol = m * eps
    # rows of these arrays are the columns being orthogonalized
    wr = np.empty((m, m))
    wi = np.empty((m, m))
    vr = np.zeros((m, m))
    vi = np.zeros((m, m))
    for j in range(m):
        for i in range(m):
            wr[j, i] = A[j, i].real
            wi[j, i] = -A[j, i].imag
        vr[j, j] = 1.0
    total = 0.0
    for j in range(m):
        for i in range(m):
            total += wr[j, i] * wr[j, i] + wi[j, i] * wi[j, i]
    # columns below this squared norm are numerically zero: never rotated, and
    # their right vectors are rebuilt afterwards
    negligible = (tol * tol) * total
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                alpha = 0.0
                beta = 0.0
                gr = 0.0
                gi = 0.0
                for i in range(m):
                    alpha += wr[p, i] * wr[p, i] + wi[p, i] * wi[p, i]
                    beta += wr[q, i] * wr[q, i] + wi[q, i] * wi[q, i]
                    # conj(w_p) . w_q
                    gr += wr[p, i] * wr[q, i] + wi[p, i] * wi[q, i]
                    gi += wr[p, i] * wi[q, i] - wi[p, i] * wr[q, i]
                if alpha <= negligible or beta <= negligible:
                    continue
                g = np.hypot(gr, gi)
                if g == 0.0 or g <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                # e^{-i phi} with gamma = g e^{i phi}
                cr = gr / g
                ci = -gi / g
                zeta = (beta - alpha) / (2.0 * g)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                sr = s * cr
                si = s * ci
                ccr = c * cr
                cci = c * ci
                for i in range(m):
                    pr_ = wr[p, i]
                    pi_ = wi[p, i]
                    qr_ = wr[q, i]
                    qi_ = wi[q, i]
                    # w_p <- c w_p - s e^{-i phi} w_q ; w_q <- s w_p + c e^{-i phi} w_q
                    wr[p, i] = c * pr_ - (sr * qr_ - si * qi_)
                    wi[p, i] = c * pi_ - (sr * qi_ + si * qr_)
                    wr[q, i] = s * pr_ + (ccr * qr_ - cci * qi_)
                    wi[q, i] = s * pi_ + (ccr * qi_ + cci * qr_)
                for i in range(m):
                    pr_ = vr[p, i]
                    pi_ = vi[p, i]
                    qr_ = vr[q, i]
                    qi_ = vi[q, i]
                    vr[p, i] = c * pr_ - (sr * qr_ - si * qi_)
                    vi[p, i] = c * pi_ - (sr * qi_ + si * qr_)
                    vr[q, i] = s * pr_ + (ccr * qr_ - cci * qi_)
                    vi[q, i] = s * pi_ + (ccr * qi_ + cci * qr_)
        if not rotated:
            break
    for j in range(m):
        acc = 0.0
        for i in range(m):
            acc += wr[j, i] * wr[j, i] + wi[j, i] * wi[j, i]
        sigma[j] = np.sqrt(acc)
    # A = V diag(sigma) Wn^H: E = V, Er rows = conj(w_j) / sigma_j
    for j in range(m):
        for i in range(m):
            E[i, j] = vr[j, i] + 1j * vi[j, i]
    valid = np.zeros(m, dtype=np.bool_)
    for j in range(m):
        if sigma[j] * sigma[j] > negligible and sigma[j] > 0:
            valid[j] = True
            for i in range(m):
                Er[j, i] = (wr[j, i] - 1j * wi[j, i]) / sigma[j]
    _complete_rows(Er, valid)
    return sweeps


@njit(cache=True, nogil=True)
def _complete_rows(Er, valid):
    """Fill invalid rows with unit vectors orthogonal to all accepted rows."""
    m = Er.shape[0]
    for j in range(m):
        if valid[j]:
            continue
        # the unit vector with the largest component outside the accepted rows
        best = -1.0
        best_c = 0
        for c in range(m):
            acc = 1.0
            for r in range(m):
                if valid[r]:
                    acc -= Er[r, c].real ** 2 + Er[r, c].imag ** 2
            if acc > best:
                best = acc
                best_c = c
        v = np.zeros(m, dtype=np.complex128)
        v[best_c] = 1.0
        for _ in range(2):
            for r in range(m):
                if valid[r]:
                    dot = 0j
                    for i in range(m):
                        dot += Er[r, i].conjugate() * v[i]
                    for i in range(m):
                        v[i] -= dot * Er[r, i]
        nrm = np.sqrt(np.sum(v.real ** 2 + v.imag ** 2))
        for i in range(m):
            Er[j, i] = v[i] / nrm
        valid[j] = True


@njit(parallel=True, cache=True)
def jacobi_batch(A, sigma, E, Er, sweeps, max_sweeps):
    for b in prange(A.shape[0]):
        sweeps[b] = jacobi_bin(A[b], sigma[b], E[b], Er[b], max_sweeps)
