import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorhbf.numerics import (
    DimensionError,
    fold,
    khatri_rao,
    least_squares,
    pseudo_inverse,
    svd,
    unfold,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestSvd:
    def test_identity(self):
        U, S, V = svd(np.eye(3))
        np.testing.assert_allclose(S, [1, 1, 1])

    def test_diagonal(self):
        U, S, V = svd(np.diag([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(S, [3, 2, 1])
        np.testing.assert_allclose(U, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(V, np.eye(3), atol=1e-15)

    def test_random_reconstruction(self):
        rng = np.random.default_rng(0)
        M = crandn(rng, 8, 4)
        U, S, V = svd(M)
        # direct multiplication, entry by entry
        recon = np.zeros_like(M)
        for i in range(8):
            for j in range(4):
                recon[i, j] = sum(U[i, f] * S[f] * np.conj(V[j, f]) for f in range(4))
        assert np.linalg.norm(recon - M) / np.linalg.norm(M) <= 1e-10
        assert np.linalg.norm(U.conj().T @ U - np.eye(4), 2) <= 1e-10
        assert np.linalg.norm(V.conj().T @ V - np.eye(4), 2) <= 1e-10
        assert np.all(np.diff(S) <= 0)

    def test_phase_convention(self):
        rng = np.random.default_rng(1)
        M = crandn(rng, 5, 6)
        V = svd(M).V
        for f in range(V.shape[1]):
            first = V[np.flatnonzero(np.abs(V[:, f]) > 1e-12)[0], f]
            assert abs(first.imag) < 1e-14 and first.real > 0

    def test_deterministic_across_rotation(self):
        # the gauge makes V independent of any input column phase rotation of U
        rng = np.random.default_rng(2)
        M = crandn(rng, 6, 3)
        V1 = svd(M).V
        V2 = svd(np.exp(0.7j) * M).V
        np.testing.assert_allclose(V1, V2, atol=1e-12)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            svd(np.array([[np.nan, 1.0]]))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 10_000))
    def test_reconstruction_property(self, m, n, seed):
        M = crandn(np.random.default_rng(seed), m, n)
        U, S, V = svd(M)
        assert np.linalg.norm((U * S) @ V.conj().T - M) <= 1e-10 * np.linalg.norm(M)


class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(pseudo_inverse(np.eye(4)), np.eye(4))

    def test_rank_deficient_diagonal(self):
        np.testing.assert_allclose(pseudo_inverse(np.diag([2.0, 0.0]), rcond=1e-12), np.diag([0.5, 0.0]))

    def test_left_inverse(self):
        M = crandn(np.random.default_rng(3), 6, 3)
        P = pseudo_inverse(M)
        assert np.linalg.norm(P @ M - np.eye(3)) <= 1e-9

    def test_penrose_identities(self):
        M = crandn(np.random.default_rng(4), 5, 3)
        P = pseudo_inverse(M)
        assert np.linalg.norm(M @ P @ M - M) <= 1e-9
        assert np.linalg.norm(P @ M @ P - P) <= 1e-9
        assert np.linalg.norm((M @ P).conj().T - M @ P) <= 1e-9
        assert np.linalg.norm((P @ M).conj().T - P @ M) <= 1e-9

    def test_negative_rcond(self):
        with pytest.raises(ValueError):
            pseudo_inverse(np.eye(2), rcond=-1)


class TestKhatriRao:
    def test_scalar(self):
        np.testing.assert_array_equal(khatri_rao([[2]], [[2]]), [[4]])

    def test_identities(self):
        expected = np.zeros((4, 2))
        expected[0, 0] = 1  # e1 kron e1
        expected[3, 1] = 1  # e2 kron e2
        np.testing.assert_array_equal(khatri_rao(np.eye(2), np.eye(2)), expected)

    def test_elementwise(self):
        rng = np.random.default_rng(5)
        A, B = crandn(rng, 3, 2), crandn(rng, 4, 2)
        KR = khatri_rao(A, B)
        for f in range(2):
            for i in range(3):
                for j in range(4):
                    assert abs(KR[i * 4 + j, f] - A[i, f] * B[j, f]) <= 1e-14 * abs(A[i, f] * B[j, f])

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 999))
    def test_associative(self, a, b, c, f, seed):
        rng = np.random.default_rng(seed)
        A, B, C = crandn(rng, a, f), crandn(rng, b, f), crandn(rng, c, f)
        np.testing.assert_allclose(khatri_rao(khatri_rao(A, B), C), khatri_rao(A, khatri_rao(B, C)), atol=1e-12)


class TestUnfold:
    def test_mode3_small(self):
        T = np.arange(4).reshape(2, 2, 1)  # T[i, j, 0] = 2i + j
        # mode-3 columns run j*I + i
        np.testing.assert_array_equal(unfold(T, 3), [[0, 2, 1, 3]])

    def test_rank_one(self):
        rng = np.random.default_rng(6)
        a, b, c = crandn(rng, 3), crandn(rng, 4), crandn(rng, 2)
        T = np.einsum("i,j,p->ijp", a, b, c)
        lhs = unfold(T, 1)
        rhs = a[:, None] @ khatri_rao(c[:, None], b[:, None]).T
        np.testing.assert_allclose(lhs, rhs, rtol=1e-14, atol=0)

    def test_cpd_layouts(self):
        rng = np.random.default_rng(7)
        A, B, C = crandn(rng, 3, 2), crandn(rng, 5, 2), crandn(rng, 2, 2)
        T = np.einsum("if,jf,pf->ijp", A, B, C)
        np.testing.assert_allclose(unfold(T, 1), A @ khatri_rao(C, B).T, atol=1e-12)
        np.testing.assert_allclose(unfold(T, 2), B @ khatri_rao(C, A).T, atol=1e-12)
        np.testing.assert_allclose(unfold(T, 3), C @ khatri_rao(B, A).T, atol=1e-12)

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_round_trip(self, mode):
        T = crandn(np.random.default_rng(8), 3, 4, 2)
        np.testing.assert_array_equal(fold(unfold(T, mode), mode, T.shape), T)

    def test_slab_access(self):
        T = crandn(np.random.default_rng(9), 3, 4, 2)
        slab = T[:, :, 1].copy()
        np.testing.assert_array_equal(fold(unfold(T, 2), 2, T.shape)[:, :, 1], slab)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            unfold(np.zeros((2, 2, 2)), 4)


class TestLeastSquares:
    def test_identity(self):
        Y = crandn(np.random.default_rng(10), 4, 3)
        np.testing.assert_allclose(least_squares(np.eye(4), Y), Y)

    def test_consistent_overdetermined(self):
        rng = np.random.default_rng(11)
        A, X0 = crandn(rng, 9, 3), crandn(rng, 3, 2)
        assert np.max(np.abs(least_squares(A, A @ X0) - X0)) <= 1e-10

    def test_zero_column_min_norm(self):
        rng = np.random.default_rng(12)
        A = crandn(rng, 6, 3)
        A[:, 1] = 0
        X = least_squares(A, crandn(rng, 6, 2))
        np.testing.assert_allclose(X[1], 0, atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            least_squares(np.ones((3, 2)), np.ones((4, 1)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 10_000))
    def test_residual_orthogonal(self, m, n, seed):
        rng = np.random.default_rng(seed)
        A, Y = crandn(rng, m, n), crandn(rng, m, 2)
        X = least_squares(A, Y)
        lhs = np.linalg.norm(A.conj().T @ (A @ X - Y))
        assert lhs <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(Y)
