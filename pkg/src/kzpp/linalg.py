"""Dense float64 kernels shared by the solvers and oracles.

Products, factorizations and the SVD are backed by LAPACK through numpy/scipy.
``jacobi_eigh`` is a plain cyclic Jacobi eigensolver kept as an independent
path for checking the LAPACK results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .metering import FlopCounter, charge, model_cholesky


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class SVDNotConverged(np.linalg.LinAlgError):
    pass


def as_matrix(M) -> np.ndarray:
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; identical seeds give identical streams."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def gemm(
    A: np.ndarray,
    B: np.ndarray,
    trans_a: bool = False,
    trans_b: bool = False,
    counter: FlopCounter | None = None,
    category: str = "projection",
) -> np.ndarray:
    """Dense product op(A) @ op(B), charging 2*m*k*n FLOPs."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    opA = A.T if trans_a else A
    opB = B.T if trans_b else B
    if opA.ndim != 2 or opB.ndim != 2:
        raise ValueError("gemm expects 2-d operands")
    m, k = opA.shape
    k2, n = opB.shape
    if k != k2:
        raise ValueError(f"inner dimensions disagree: {opA.shape} x {opB.shape}")
    charge(counter, category, 2 * m * k * n)
    return opA @ opB


@dataclass(frozen=True)
class CholeskyFactor:
    """Upper-triangular R with R^T R = M + jitter * I."""

    R: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def solve(self, y: np.ndarray, counter: FlopCounter | None = None,
              category: str = "projection") -> np.ndarray:
        """(R^T R)^{-1} y via two triangular solves."""
        z = triangular_solve(self, y, "upper-transposed", counter, category)
        return triangular_solve(self, z, "upper", counter, category)


def cholesky(
    M: np.ndarray,
    jitter: bool = True,
    counter: FlopCounter | None = None,
    category: str = "factorization",
) -> CholeskyFactor:
    """Upper Cholesky factor with jitter escalation 0, 1e-12 tr/n, 1e-8 tr/n."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"cholesky needs a square matrix, got {M.shape}")
    n = M.shape[0]
    scale = max(np.abs(M).max(initial=0.0), 1e-300)
    if np.abs(M - M.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("cholesky input is not symmetric")
    charge(counter, category, model_cholesky(n))
    tr = np.trace(M) / n
    levels = (0.0, 1e-12 * tr, 1e-8 * tr) if jitter else (0.0,)
    for eps in levels:
        try:
            R = np.linalg.cholesky(M + eps * np.eye(n)).T
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(R) > 0):
            return CholeskyFactor(np.ascontiguousarray(R), float(eps))
    raise NotPositiveDefinite(f"cholesky failed after {len(levels)} jitter levels (n={n})")


def triangular_solve(
    R: CholeskyFactor | np.ndarray,
    y: np.ndarray,
    side: str = "upper",
    counter: FlopCounter | None = None,
    category: str = "projection",
) -> np.ndarray:
    """Solve R x = y (``upper``) or R^T x = y (``upper-transposed``)."""
    Rm = R.R if isinstance(R, CholeskyFactor) else np.asarray(R, dtype=np.float64)
    s = Rm.shape[0]
    if y.shape[0] != s:
        raise ValueError(f"triangular_solve: factor dim {s} vs rhs length {y.shape[0]}")
    if np.any(np.diag(Rm) == 0):
        raise np.linalg.LinAlgError("zero diagonal entry in triangular factor")
    if side not in ("upper", "upper-transposed"):
        raise ValueError(f"unknown side {side!r}")
    cols = 1 if y.ndim == 1 else y.shape[1]
    charge(counter, category, s * s * cols)
    return sla.solve_triangular(Rm, y, trans=1 if side == "upper-transposed" else 0,
                                lower=False, check_finite=False)


def svd(M: np.ndarray, full: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD, singular values descending. Returns (U, s, V) with M = U diag(s) V^T."""
    M = as_matrix(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError as exc:
        raise SVDNotConverged(str(exc)) from exc
    return U, s, Vt.T


def jacobi_eigh(S: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns eigenvalues in descending order and the matching eigenvectors.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * max(np.linalg.norm(A), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.array([[c, s], [-s, c]])
                idx = [p, q]
                A[idx, :] = J.T @ A[idx, :]
                A[:, idx] = A[:, idx] @ J
                V[:, idx] = V[:, idx] @ J
    else:
        raise SVDNotConverged("Jacobi sweeps did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def random_orthogonal(n: int, seed) -> np.ndarray:
    """Haar-ish orthogonal matrix: QR of a seeded Gaussian with sign-fixed diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    G = make_rng(seed).standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d
