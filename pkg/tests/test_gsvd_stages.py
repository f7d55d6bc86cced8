"""Each solver stage against an independent oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsvdmusic.errors import SingularMatrixError
from gsvdmusic.gsvd import (back_transform, bidiagonalize, compute_tolerance, init_vectors,
                            mat_inverse, mat_mul, qr_iterate, reference_solve, sort_descending)

from .conftest import rand_hpd, rand_psd

EPS32 = float(np.finfo(np.float32).eps)


def gauss_jordan(K):
    """Textbook partial-pivot elimination in double precision."""
    m = K.shape[0]
    a = np.hstack([K.astype(complex), np.eye(m)])
    for c in range(m):
        p = c + int(np.argmax(np.abs(a[c:, c])))
        a[[c, p]] = a[[p, c]]
        a[c] /= a[c, c]
        for r in range(m):
            if r != c:
                a[r] -= a[r, c] * a[c]
    return a[:, m:]


def bidiag_matrix(d, e):
    return np.diag(d) + np.diag(e, 1)


class TestInverse:
    def test_identity(self):
        np.testing.assert_array_equal(mat_inverse(np.eye(4)[None])[0], np.eye(4))

    def test_diagonal(self):
        np.testing.assert_array_equal(mat_inverse(np.diag([2.0, 4.0])[None])[0], np.diag([0.5, 0.25]))

    def test_hermitian_2x2_frozen(self):
        # exact rational inverse, computed with mpmath: det = 7
        K = np.array([[4, 1 + 2j], [1 - 2j, 3]])
        expect = np.array([[3, -1 - 2j], [-1 + 2j, 4]]) / 7
        np.testing.assert_allclose(mat_inverse(K, "double")[0], expect, rtol=1e-15, atol=1e-16)

    def test_random_hpd_vs_elimination_oracle(self, rng):
        K = rand_hpd(rng, 6, 20)
        inv = mat_inverse(K, "single")
        for k, ki in zip(K, inv):
            ref = gauss_jordan(k)
            assert np.linalg.norm(ki - ref) <= 1e-4 * np.linalg.norm(ref)
            assert np.linalg.norm(k @ ki - np.eye(6)) <= 1e-4 * 6

    def test_singular_names_bin(self):
        K = np.stack([np.eye(3), np.zeros((3, 3)), np.eye(3)])
        with pytest.raises(SingularMatrixError, match=r"\[1\]") as info:
            mat_inverse(K)
        assert info.value.bins == (1,)

    def test_pivoting_modes(self):
        # zero leading pivot: only partial pivoting gets through
        K = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(mat_inverse(K, pivoting="partial")[0], K)
        with pytest.raises(SingularMatrixError):
            mat_inverse(K, pivoting="none")

    def test_no_pivoting_on_hpd(self, rng):
        K = rand_hpd(rng, 5, 4)
        a = mat_inverse(K, "double", pivoting="none")
        np.testing.assert_allclose(a, np.linalg.inv(K), rtol=1e-10, atol=1e-12)


class TestMatMul:
    def test_identity_and_zero(self, rng):
        R = rand_psd(rng, 4, 3).astype(np.complex64)
        I = np.broadcast_to(np.eye(4, dtype=np.complex64), (3, 4, 4))
        np.testing.assert_array_equal(mat_mul(I, R), R)
        assert not mat_mul(R, np.zeros_like(R)).any()

    def test_triple_loop_oracle(self, rng):
        X = rand_hpd(rng, 8, 2).astype(np.complex64)
        Y = rand_psd(rng, 8, 2).astype(np.complex64)
        A = mat_mul(X, Y)
        for b in range(2):
            ref = np.zeros((8, 8), complex)
            for i in range(8):
                for j in range(8):
                    for k in range(8):
                        ref[i, j] += complex(X[b, i, k]) * complex(Y[b, k, j])
            assert np.linalg.norm(A[b] - ref) <= 1e-5 * np.linalg.norm(ref)

    def test_index_map(self, rng):
        X = rand_hpd(rng, 3, 2)
        Y = rand_psd(rng, 3, 4)
        kidx = np.array([1, 0, 1, 1])
        np.testing.assert_allclose(mat_mul(X, Y, kidx), X[kidx] @ Y, rtol=1e-12)


class TestBidiagonalize:
    def test_real_positive_bidiagonal_unchanged(self):
        B = bidiag_matrix([3.0, 2.0, 1.0, 4.0], [0.5, 0.25, 2.0]).astype(np.complex128)
        bd = bidiagonalize(B)
        np.testing.assert_array_equal(bd.d[0], [3, 2, 1, 4])
        np.testing.assert_array_equal(bd.e[0], [0.5, 0.25, 2.0])
        np.testing.assert_array_equal(bd.left()[0], np.eye(4))
        np.testing.assert_array_equal(bd.right()[0], np.eye(4))

    def test_diagonal(self):
        bd = bidiagonalize(np.diag([3.0, 1.0, 2.0]).astype(np.complex64))
        np.testing.assert_array_equal(bd.d[0], [3, 1, 2])
        assert not bd.e.any()

    def test_random_reconstructs(self, rng):
        A = (rng.standard_normal((5, 6, 6)) + 1j * rng.standard_normal((5, 6, 6))).astype(np.complex64)
        bd = bidiagonalize(A)
        assert np.all(bd.d >= 0) and np.all(bd.e >= 0)
        U, V, B = bd.left(), bd.right(), bd.matrix()
        for b in range(5):
            assert np.linalg.norm(U[b] @ B[b] @ V[b].conj().T - A[b]) <= 1e-4 * np.linalg.norm(A[b])
            assert np.linalg.norm(U[b].conj().T @ A[b] @ V[b] - B[b]) <= 1e-5 * np.linalg.norm(A[b])
            assert np.linalg.norm(U[b].conj().T @ U[b] - np.eye(6)) <= 1e-5 * 6

    def test_zero_columns(self):
        A = np.zeros((1, 4, 4), np.complex128)
        A[0, 0, 2] = 1j
        bd = bidiagonalize(A)
        assert np.all(np.isfinite(bd.d)) and np.all(np.isfinite(bd.hl))
        np.testing.assert_allclose(np.sort(np.r_[bd.d[0], bd.e[0]])[-1], 1.0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 9))
    def test_singular_values_preserved(self, seed, m):
        r = np.random.default_rng(seed)
        A = r.standard_normal((m, m)) + 1j * r.standard_normal((m, m))
        bd = bidiagonalize(A)
        s_ref = np.linalg.svd(A, compute_uv=False)
        s_bd = np.linalg.svd(bd.matrix()[0], compute_uv=False)
        np.testing.assert_allclose(s_bd, s_ref, rtol=1e-10, atol=1e-12 * s_ref[0])


class TestTolerance:
    def test_zero(self):
        assert compute_tolerance(np.zeros(4), np.zeros(3))[0] == 0

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_small_example(self, dtype):
        tol = compute_tolerance(np.array([3, 1], dtype), np.array([0.5], dtype), 2.0)
        assert tol[0] == dtype(2.0) * np.finfo(dtype).eps * dtype(3.0)
        assert tol.dtype == dtype

    def test_sequential_oracle(self, rng):
        d = rng.uniform(0, 5, (73, 60)).astype(np.float32)
        e = rng.uniform(0, 5, (73, 59)).astype(np.float32)
        tol = compute_tolerance(d, e)
        for b in range(73):
            best = abs(d[b, 0])
            for j in range(1, 60):
                best = max(best, abs(d[b, j]) + abs(e[b, j - 1]))
            assert tol[b] == np.float32(np.finfo(np.float32).eps) * best


class TestInitVectors:
    @pytest.mark.parametrize("m,n", [(1, 1), (3, 2), (60, 73)])
    def test_identity(self, m, n):
        E, Er = init_vectors(m, n)
        assert E.shape == (n, m, m)
        np.testing.assert_array_equal(E, np.broadcast_to(np.eye(m), (n, m, m)))
        np.testing.assert_array_equal(Er, E)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            init_vectors(0, 3)


def run_qr(d, e, scale=1.0, max_sweeps=None, dtype=np.float64):
    d = np.array(d, dtype)[None]
    e = np.array(e if len(e) else [0.0], dtype)[None]
    m = d.shape[1]
    E = np.eye(m, dtype=dtype)[None].copy()
    Er = E.copy()
    tol = compute_tolerance(d, e, scale)
    sweeps, conv = qr_iterate(d, e, E, Er, tol, max_sweeps or 30 * m)
    return d[0], e[0], E[0], Er[0], sweeps[0], conv[0]


class TestQR:
    def test_already_diagonal(self):
        d, e, E, Er, sweeps, conv = run_qr([3.0, 1.0, 2.0], [0.0, 0.0])
        assert sweeps == 0 and conv
        np.testing.assert_array_equal(d, [3, 1, 2])
        np.testing.assert_array_equal(E, np.eye(3))
        np.testing.assert_array_equal(Er, np.eye(3))

    def test_closed_form_2x2(self):
        # sqrt(7 +- sqrt(13)), evaluated with mpmath at 30 digits
        d, *_ = run_qr([3.0, 2.0], [1.0])
        np.testing.assert_allclose(np.sort(d)[::-1], [3.25661653798293994, 1.84240297560984489],
                                   rtol=1e-15)

    def test_random_8_vs_jacobi(self, rng):
        for _ in range(20):
            d0 = rng.uniform(0, 3, 8)
            e0 = rng.uniform(0, 3, 7)
            B = bidiag_matrix(d0, e0)
            d, e, E, Er, sweeps, conv = run_qr(d0.astype(np.float32), e0.astype(np.float32),
                                               dtype=np.float32)
            ref = reference_solve(B).sigma[0]
            assert conv
            np.testing.assert_allclose(np.sort(d)[::-1], ref, rtol=1e-5, atol=1e-6 * ref[0])
            assert np.linalg.norm(E @ np.diag(d) @ Er - B) <= 1e-5 * np.linalg.norm(B)

    def test_zero_diagonal_entry(self):
        d0, e0 = [2.0, 0.0, 3.0, 1.0], [1.0, 1.0, 0.5]
        d, e, E, Er, _, conv = run_qr(d0, e0)
        B = bidiag_matrix(d0, e0)
        assert conv and np.all(d >= 0)
        np.testing.assert_allclose(np.sort(d)[::-1], np.linalg.svd(B, compute_uv=False), atol=1e-14)
        np.testing.assert_allclose(E @ np.diag(d) @ Er, B, atol=1e-14)

    def test_nonconvergence_flagged(self, rng):
        *_, sweeps, conv = run_qr(rng.uniform(1, 2, 12), rng.uniform(1, 2, 11), max_sweeps=1)
        assert not conv and sweeps == 1

    def test_looser_tolerance_fewer_sweeps(self, rng):
        d0, e0 = rng.uniform(0, 1, 30), rng.uniform(0, 1, 29)
        tight = run_qr(d0, e0, scale=1.0)[4]
        loose = run_qr(d0, e0, scale=1e8)[4]
        assert loose <= tight


class TestSort:
    def test_example(self):
        v = np.array([[1.0, 3.0, 2.0]])
        E = np.eye(3)[None].copy()
        Er = np.eye(3)[None].copy()
        v, E, Er, perm = sort_descending(v, E, Er)
        np.testing.assert_array_equal(v[0], [3, 2, 1])
        np.testing.assert_array_equal(perm[0], [1, 2, 0])
        np.testing.assert_array_equal(E[0], np.eye(3)[:, [1, 2, 0]])
        np.testing.assert_array_equal(Er[0], np.eye(3)[[1, 2, 0]])

    def test_sorted_is_identity(self):
        v = np.array([[4.0, 2.0, 2.0, 0.0]])
        _, _, _, perm = sort_descending(v, np.eye(4)[None].copy(), np.eye(4)[None].copy())
        np.testing.assert_array_equal(perm[0], np.arange(4))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=12))
    def test_stable_with_duplicates(self, vals):
        v = np.array([vals], dtype=np.float64)
        m = len(vals)
        E = np.arange(m * m, dtype=float).reshape(1, m, m)
        Er = E.copy()
        E0 = E.copy()
        out, E, Er, perm = sort_descending(v.copy(), E, Er)
        expect = sorted(range(m), key=lambda i: -vals[i])  # Python's sort is stable
        np.testing.assert_array_equal(perm[0], expect)
        np.testing.assert_array_equal(E[0], E0[0][:, expect])
        np.testing.assert_array_equal(Er[0], E0[0][expect])
        # the product is unchanged by the permutation
        np.testing.assert_allclose((E0[0] * v[0]) @ E0[0], (E[0] * out[0]) @ Er[0])


class TestBackTransform:
    def test_identity_factors(self, rng):
        B = bidiag_matrix([3.0, 2.0, 1.0], [1.0, 1.0]).astype(np.complex128)
        bd = bidiagonalize(B)
        E = (rng.standard_normal((1, 3, 3))).astype(np.float64)
        Er = (rng.standard_normal((1, 3, 3))).astype(np.float64)
        Eo, Ero = back_transform(E, Er, bd)
        np.testing.assert_array_equal(Eo, E)
        np.testing.assert_array_equal(Ero, Er)

    def test_diagonal_case_permuted_identity(self):
        bd = bidiagonalize(np.diag([1.0, 3.0, 2.0]).astype(np.complex128))
        E, Er = np.eye(3)[None].copy(), np.eye(3)[None].copy()
        qr_iterate(bd.d, bd.e, E, Er, compute_tolerance(bd.d, bd.e), 90)
        _, E, Er, perm = sort_descending(bd.d, E, Er)
        Eo, Ero = back_transform(E, Er, bd)
        np.testing.assert_array_equal(Eo[0], np.eye(3)[:, [1, 2, 0]])
        np.testing.assert_array_equal(Ero[0], np.eye(3)[[1, 2, 0]])

    def test_full_chain_random(self, rng):
        A = (rng.standard_normal((4, 6, 6)) + 1j * rng.standard_normal((4, 6, 6))).astype(np.complex64)
        bd = bidiagonalize(A)
        E, Er = np.broadcast_to(np.eye(6, dtype=np.float32), (2, 4, 6, 6)).copy()
        qr_iterate(bd.d, bd.e, E, Er, compute_tolerance(bd.d, bd.e), 180)
        sigma, E, Er, _ = sort_descending(bd.d, E, Er)
        Eo, Ero = back_transform(E, Er, bd)
        for b in range(4):
            assert np.linalg.norm(Eo[b].conj().T @ Eo[b] - np.eye(6)) <= 1e-4
            rec = (Eo[b] * sigma[b]) @ Ero[b]
            assert np.linalg.norm(rec - A[b]) <= 1e-4 * np.linalg.norm(A[b])
