import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kzpp.linalg import (NotPositiveDefinite, as_matrix, cholesky, gemm, jacobi_eigh, make_rng,
                         random_orthogonal, svd, triangular_solve)
from kzpp.metering import FlopCounter


def test_gemm_value_and_charge():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    c = FlopCounter()
    np.testing.assert_allclose(gemm(A, B, trans_b=True, counter=c), A @ B.T)
    assert c.subtotals["projection"] == 2 * 3 * 4 * 5


def test_gemm_shape_mismatch():
    with pytest.raises(ValueError, match="inner dimensions"):
        gemm(np.ones((2, 3)), np.ones((2, 3)))


@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_cholesky_reconstructs_spd(n, seed):
    X = np.random.default_rng(seed).standard_normal((n, n + 2))
    M = X @ X.T + 1e-3 * np.eye(n)
    F = cholesky(M)
    assert F.jitter == 0.0
    np.testing.assert_allclose(F.R.T @ F.R, M, atol=1e-10 * np.abs(M).max())
    y = np.arange(n, dtype=float)
    np.testing.assert_allclose(M @ F.solve(y), y, atol=1e-6 * max(1.0, np.abs(y).max()))


def test_cholesky_jitter_on_singular_psd():
    v = np.array([1.0, 1.0, 0.0])
    F = cholesky(np.outer(v, v))
    assert F.jitter > 0


def test_cholesky_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError, match="not symmetric"):
        cholesky(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_cholesky_charges_model():
    c = FlopCounter()
    cholesky(np.eye(6), counter=c)
    assert c.subtotals["factorization"] == 72


def test_triangular_solve_both_sides():
    R = np.array([[2.0, 1.0], [0.0, 4.0]])
    y = np.array([3.0, 8.0])
    np.testing.assert_allclose(R @ triangular_solve(R, y, "upper"), y)
    np.testing.assert_allclose(R.T @ triangular_solve(R, y, "upper-transposed"), y)
    with pytest.raises(ValueError):
        triangular_solve(R, np.ones(3))


def test_svd_descending_and_reconstructs():
    M = np.random.default_rng(2).standard_normal((5, 3))
    U, s, V = svd(M)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose((U * s) @ V.T, M, atol=1e-12)


@given(n=st.integers(1, 8), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_jacobi_agrees_with_lapack(n, seed):
    X = np.random.default_rng(seed).standard_normal((n, n))
    S = X + X.T
    w, V = jacobi_eigh(S)
    np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(S))[::-1], atol=1e-10 * max(1, abs(w).max()))
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, S, atol=1e-9 * max(1, abs(w).max()))


def test_random_orthogonal_and_rng_determinism():
    Q = random_orthogonal(7, 3)
    np.testing.assert_allclose(Q.T @ Q, np.eye(7), atol=1e-13)
    np.testing.assert_array_equal(Q, random_orthogonal(7, 3))
    assert make_rng(5).random() == make_rng(5).random()
    g = make_rng(1)
    assert make_rng(g) is g


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ValueError, match="2-d"):
        as_matrix(np.ones(3))
    with pytest.raises(ValueError, match="non-finite"):
        as_matrix(np.array([[np.nan]]))
