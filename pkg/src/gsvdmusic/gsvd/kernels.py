"""Compiled per-bin kernels for the Householder/QR solver.

Every function here works on a single frequency bin.  Scalar constants are
derived from the ``one`` argument so that single-precision inputs are processed
in single-precision arithmetic throughout.

Orientation conventions
-----------------------
* Bidiagonal ``B`` is upper bidiagonal: diagonal ``d[0..m-1]``, superdiagonal
  ``e[0..m-2]`` with ``e[j] = B[j, j+1]``.
* During QR iterations ``B0 = E @ B @ Er`` holds, so left rotations act on the
  columns of ``E`` and right rotations on the rows of ``Er``.
* Left reflectors are stored column-wise in ``hl`` (column ``k``, rows ``k:``),
  right reflectors row-wise in ``hr`` (row ``k``, columns ``k+1:``).  A zero
  ``tl[k]``/``tr[k]`` means the reflector was skipped.
"""

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


# -- stage: Gauss-Jordan inverse -------------------------------------------------

@njit(**_JIT)
def inverse_bin(K, out, partial, eps):
    """Invert ``K`` into ``out``; returns False on a sub-threshold pivot."""
    m = K.shape[0]
    one = eps / eps
    zero = eps - eps
    a = K.copy()
    scale = zero
    for i in range(m):
        for j in range(m):
            out[i, j] = zero
            v = abs(a[i, j])
            if v > scale:
                scale = v
        out[i, i] = one
    tiny = scale * eps * m
    for col in range(m):
        p = col
        if partial:
            best = abs(a[col, col])
            for r in range(col + 1, m):
                v = abs(a[r, col])
                if v > best:
                    best = v
                    p = r
        if not abs(a[p, col]) > tiny:
            return False
        if p != col:
            for j in range(m):
                t = a[p, j]
                a[p, j] = a[col, j]
                a[col, j] = t
                t = out[p, j]
                out[p, j] = out[col, j]
                out[col, j] = t
        inv = one / a[col, col]
        for j in range(m):
            a[col, j] *= inv
            out[col, j] *= inv
        for r in range(m):
            if r != col:
                f = a[r, col]
                if f != 0:
                    for j in range(m):
                        a[r, j] -= f * a[col, j]
                        out[r, j] -= f * out[col, j]
    return True


# -- stage: matrix product -------------------------------------------------------

@njit(**_JIT)
def matmul_entry(X, Y, i, j):
    acc = X[i, 0] * Y[0, j]
    for k in range(1, X.shape[1]):
        acc += X[i, k] * Y[k, j]
    return acc


@njit(**_JIT)
def matmul_bin(X, Y, out):
    m = X.shape[0]
    for i in range(m):
        for j in range(Y.shape[1]):
            out[i, j] = matmul_entry(X, Y, i, j)


# -- stage: Householder bidiagonalization with phase transform -------------------

@njit(**_JIT)
def bidiag_bin(A, d, e, hl, tl, pl, hr, tr, pr):
    """Reduce ``A`` to a real non-negative upper bidiagonal ``(d, e)``.

    ``B = QL^H A QR`` where ``QL = H0 D0 H1 D1 ...`` (``Dk`` puts ``pl[k]`` at
    position ``k``) and ``QR = G0 S0 G1 S1 ...`` (``Sk`` puts ``conj(pr[k])`` at
    position ``k+1``).
    """
    m = A.shape[0]
    W = A.copy()
    # d is an output buffer and may hold garbage; take typed constants from a fresh array
    zero = np.zeros(1, dtype=d.dtype)[0]
    one = zero + 1
    cunit = np.ones(1, dtype=A.dtype)[0]
    for k in range(m):
        # left reflector: zero W[k+1:, k]
        s = zero
        for i in range(k + 1, m):
            s += W[i, k].real * W[i, k].real + W[i, k].imag * W[i, k].imag
        x0 = W[k, k]
        a0 = abs(x0)
        ph = x0 / a0 if a0 > 0 else cunit
        for i in range(m):
            hl[i, k] = 0
        if s == 0:
            tl[k] = zero
            pl[k] = ph
            d[k] = a0
        else:
            alpha = np.sqrt(s + a0 * a0)
            beta = one / (alpha * (alpha + a0))
            hl[k, k] = x0 + ph * alpha
            for i in range(k + 1, m):
                hl[i, k] = W[i, k]
            tl[k] = beta
            for j in range(k + 1, m):
                w = hl[k, k].conjugate() * W[k, j]
                for i in range(k + 1, m):
                    w += hl[i, k].conjugate() * W[i, j]
                w *= beta
                for i in range(k, m):
                    W[i, j] -= hl[i, k] * w
            pl[k] = -ph
            d[k] = alpha
        W[k, k] = d[k]
        for i in range(k + 1, m):
            W[i, k] = 0
        cp = pl[k].conjugate()
        for j in range(k + 1, m):
            W[k, j] *= cp

        if k == m - 1:
            break
        # right reflector: zero W[k, k+2:]
        s = zero
        for j in range(k + 2, m):
            s += W[k, j].real * W[k, j].real + W[k, j].imag * W[k, j].imag
        y0 = W[k, k + 1]
        a0 = abs(y0)
        for j in range(m):
            hr[k, j] = 0
        if s == 0:
            tr[k] = zero
            pr[k] = y0 / a0 if a0 > 0 else cunit
            e[k] = a0
        else:
            alpha = np.sqrt(s + a0 * a0)
            beta = one / (alpha * (alpha + a0))
            z0 = y0.conjugate()
            phz = z0 / a0 if a0 > 0 else cunit
            hr[k, k + 1] = z0 + phz * alpha
            for j in range(k + 2, m):
                hr[k, j] = W[k, j].conjugate()
            tr[k] = beta
            for i in range(k + 1, m):
                w = W[i, k + 1] * hr[k, k + 1]
                for j in range(k + 2, m):
                    w += W[i, j] * hr[k, j]
                w *= beta
                for j in range(k + 1, m):
                    W[i, j] -= w * hr[k, j].conjugate()
            pr[k] = -phz.conjugate()
            e[k] = alpha
        W[k, k + 1] = e[k]
        for j in range(k + 2, m):
            W[k, j] = 0
        cp = pr[k].conjugate()
        for i in range(k + 1, m):
            W[i, k + 1] *= cp


# -- stage: tolerance ------------------------------------------------------------

@njit(**_JIT)
def column_sum(d, e, j):
    if j == 0:
        return abs(d[0])
    return abs(d[j]) + abs(e[j - 1])


@njit(**_JIT)
def tolerance_bin(d, e, eps, scale):
    best = d[0] - d[0]
    for j in range(d.shape[0]):
        v = column_sum(d, e, j)
        if v > best:
            best = v
    return scale * eps * best


# -- stage: identity initialization ---------------------------------------------

@njit(**_JIT)
def identity_entry(out, i, j):
    out[i, j] = 1 if i == j else 0


@njit(**_JIT)
def identity_bin(out):
    m = out.shape[0]
    for i in range(m):
        for j in range(m):
            identity_entry(out, i, j)


# -- stage: implicit-shift QR on the bidiagonal ---------------------------------

@njit(**_JIT)
def givens(f, g):
    """``(c, s, r)`` with ``[c s; -s c] @ [f, g] = [r, 0]``."""
    zero = f - f
    if g == 0:
        return zero + 1, zero, f
    r = np.hypot(f, g)
    return f / r, g / r, r


@njit(**_JIT)
def rot_cols(X, i, k, c, s):
    # X[:, i], X[:, k] <- c X_i + s X_k, -s X_i + c X_k
    for r in range(X.shape[0]):
        xi = X[r, i]
        xk = X[r, k]
        X[r, i] = c * xi + s * xk
        X[r, k] = c * xk - s * xi


@njit(**_JIT)
def rot_rows(X, i, k, c, s):
    for r in range(X.shape[1]):
        xi = X[i, r]
        xk = X[k, r]
        X[i, r] = c * xi + s * xk
        X[k, r] = c * xk - s * xi


@njit(**_JIT)
def smallest_sv_2x2(f, g, h):
    """Smallest singular value of ``[[f, g], [0, h]]``."""
    zero = f - f
    one = zero + 1
    two = one + one
    fa = abs(f)
    ga = abs(g)
    ha = abs(h)
    fhmn = min(fa, ha)
    fhmx = max(fa, ha)
    if fhmn == 0:
        return zero
    if ga < fhmx:
        as_ = one + fhmn / fhmx
        at = (fhmx - fhmn) / fhmx
        au = (ga / fhmx) * (ga / fhmx)
        c = two / (np.sqrt(as_ * as_ + au) + np.sqrt(at * at + au))
        return fhmn * c
    au = fhmx / ga
    if au == 0:
        return (fhmn * fhmx) / ga
    as_ = one + fhmn / fhmx
    at = (fhmx - fhmn) / fhmx
    c = one / (np.sqrt(one + (as_ * au) * (as_ * au)) + np.sqrt(one + (at * au) * (at * au)))
    return two * (fhmn * c) * au


@njit(**_JIT)
def chase_row(d, e, E, k, hi):
    """``d[k] == 0``, ``k < hi``: rotate ``e[k]`` out of row ``k`` to the right."""
    f = e[k]
    e[k] = 0
    for j in range(k + 1, hi + 1):
        c, s, r = givens(d[j], f)
        d[j] = r
        if j < hi:
            f = -s * e[j]
            e[j] = c * e[j]
        rot_cols(E, j, k, c, s)


@njit(**_JIT)
def chase_col(d, e, Er, lo, hi):
    """``d[hi] == 0``: rotate ``e[hi-1]`` out of column ``hi`` upward."""
    f = e[hi - 1]
    e[hi - 1] = 0
    for j in range(hi - 1, lo - 1, -1):
        c, s, r = givens(d[j], f)
        d[j] = r
        if j > lo:
            f = -s * e[j - 1]
            e[j - 1] = c * e[j - 1]
        rot_rows(Er, j, hi, c, s)


@njit(**_JIT)
def qr_step(d, e, E, Er, lo, hi, eps):
    """One Golub-Kahan sweep with shift on the unreduced block ``lo..hi``."""
    zero = d[0] - d[0]
    one = zero + 1
    shift = smallest_sv_2x2(d[hi - 1], e[hi - 1], d[hi])
    sll = abs(d[lo])
    if sll > 0 and (shift / sll) * (shift / sll) < eps:
        shift = zero
    sign = one if d[lo] >= 0 else -one
    f = (sll - shift) * (sign + shift / d[lo])
    g = e[lo]
    for i in range(lo, hi):
        c, s, r = givens(f, g)
        if i > lo:
            e[i - 1] = r
        f = c * d[i] + s * e[i]
        e[i] = c * e[i] - s * d[i]
        g = s * d[i + 1]
        d[i + 1] = c * d[i + 1]
        rot_rows(Er, i, i + 1, c, s)
        c, s, r = givens(f, g)
        d[i] = r
        f = c * e[i] + s * d[i + 1]
        d[i + 1] = c * d[i + 1] - s * e[i]
        if i < hi - 1:
            g = s * e[i + 1]
            e[i + 1] = c * e[i + 1]
        rot_cols(E, i, i + 1, c, s)
    e[hi - 1] = f


@njit(**_JIT)
def qr_bin(d, e, E, Er, tol, max_sweeps, eps):
    """Diagonalize the bidiagonal in place; returns ``(sweeps, converged)``."""
    m = d.shape[0]
    sweeps = 0
    converged = True
    hi = m - 1
    while True:
        for j in range(m - 1):
            if abs(e[j]) <= tol:
                e[j] = 0
        while hi > 0 and e[hi - 1] == 0:
            hi -= 1
        if hi == 0:
            break
        lo = hi - 1
        while lo > 0 and e[lo - 1] != 0:
            lo -= 1
        zero_at = -1
        for k in range(lo, hi + 1):
            if abs(d[k]) <= tol:
                zero_at = k
                break
        if zero_at >= 0:
            d[zero_at] = 0
            if zero_at < hi:
                chase_row(d, e, E, zero_at, hi)
            else:
                chase_col(d, e, Er, lo, hi)
            continue
        if sweeps >= max_sweeps:
            converged = False
            break
        qr_step(d, e, E, Er, lo, hi, eps)
        sweeps += 1
    for j in range(m):
        if d[j] < 0:
            d[j] = -d[j]
            for c in range(Er.shape[1]):
                Er[j, c] = -Er[j, c]
    return sweeps, converged


# -- stage: sort ----------------------------------------------------------------

@njit(**_JIT)
def sort_bin(d, E, Er):
    order = np.argsort(-d, kind="mergesort")
    d[:] = d[order]
    E[:, :] = E[:, order]
    Er[:, :] = Er[order, :]
    return order


# -- stage: back transformation ------------------------------------------------

@njit(**_JIT)
def back_transform_bin(hl, tl, pl, hr, tr, pr, E, Er):
    """``E <- QL @ E`` and ``Er <- Er @ QR^H`` using the retained factors."""
    m = E.shape[0]
    for k in range(m - 1, -1, -1):
        for j in range(m):
            E[k, j] *= pl[k]
        if tl[k] != 0:
            for j in range(m):
                w = hl[k, k].conjugate() * E[k, j]
                for i in range(k + 1, m):
                    w += hl[i, k].conjugate() * E[i, j]
                w *= tl[k]
                for i in range(k, m):
                    E[i, j] -= hl[i, k] * w
    for k in range(m - 2, -1, -1):
        for i in range(m):
            Er[i, k + 1] *= pr[k]
        if tr[k] != 0:
            for i in range(m):
                w = Er[i, k + 1] * hr[k, k + 1]
                for j in range(k + 2, m):
                    w += Er[i, j] * hr[k, j]
                w *= tr[k]
                for j in range(k + 1, m):
                    Er[i, j] -= w * hr[k, j].conjugate()


# -- canonical form of the singular vectors -------------------------------------

@njit(**_JIT)
def canonical_null_bin(sigma, E, Er, Z, null_tol):
    """Replace the basis of the numerically-zero singular cluster by a canonical one.

    The cluster is ``sigma <= null_tol * sigma[0]`` (values sorted descending).
    Its left basis ``N`` becomes ``N @ polar(N^H Z)``, which depends only on the
    subspace, and the matching rows of ``Er`` get the inverse rotation.
    """
    m = sigma.shape[0]
    if null_tol <= 0:
        return m
    thresh = null_tol * sigma[0]
    rank = 0
    for j in range(m):
        if sigma[j] > thresh:
            rank += 1
    kc = m - rank
    if kc < 2:
        return rank
    N = np.ascontiguousarray(E[:, rank:])
    C = np.ascontiguousarray(N.conj().T) @ np.ascontiguousarray(Z[:, :kc])
    u, s, vh = np.linalg.svd(C)
    W = u @ vh
    E[:, rank:] = N @ W
    Er[rank:, :] = np.ascontiguousarray(W.conj().T) @ np.ascontiguousarray(Er[rank:, :])
    return rank


@njit(**_JIT)
def canonical_phase_bin(E, Er):
    """Rotate each left vector so its largest-magnitude entry is real positive."""
    m = E.shape[0]
    for j in range(E.shape[1]):
        best = abs(E[0, j])
        p = 0
        for i in range(1, m):
            v = abs(E[i, j])
            if v > best:
                best = v
                p = i
        if best == 0:
            continue
        ph = E[p, j] / best
        cph = ph.conjugate()
        for i in range(m):
            E[i, j] *= cph
        E[p, j] = best
        for c in range(Er.shape[1]):
            Er[j, c] *= ph


# -- whole solve for one bin ------------------------------------------------------

@njit(**_JIT)
def solve_bin(Kinv, R, sigma, E, Er, Z, eps, tol_scale, max_sweeps, null_tol):
    """All stages after the inverse for one bin; returns ``(sweeps, converged)``."""
    m = R.shape[0]
    A = np.empty_like(R)
    matmul_bin(Kinv, R, A)
    e = np.empty(max(m - 1, 1), dtype=sigma.dtype)
    hl = np.empty_like(R)
    hr = np.empty_like(R)
    tl = np.empty_like(sigma)
    tr = np.empty_like(sigma)
    pl = np.empty(m, dtype=R.dtype)
    pr = np.empty(m, dtype=R.dtype)
    bidiag_bin(A, sigma, e, hl, tl, pl, hr, tr, pr)
    tol = tolerance_bin(sigma, e, eps, tol_scale)
    Eq = np.empty((m, m), dtype=sigma.dtype)
    Erq = np.empty((m, m), dtype=sigma.dtype)
    identity_bin(Eq)
    identity_bin(Erq)
    sweeps, converged = qr_bin(sigma, e, Eq, Erq, tol, max_sweeps, eps)
    sort_bin(sigma, Eq, Erq)
    for i in range(m):
        for j in range(m):
            E[i, j] = Eq[i, j]
            Er[i, j] = Erq[i, j]
    back_transform_bin(hl, tl, pl, hr, tr, pr, E, Er)
    canonical_null_bin(sigma, E, Er, Z, null_tol)
    canonical_phase_bin(E, Er)
    return sweeps, converged
