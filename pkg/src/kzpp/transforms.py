"""Fast Hadamard machinery: FHT, SymFHT, randomized Hadamard and SRHT sketches.

Hadamard convention: H_1 = [1], H_n = [[H, H], [H, -H]] with H = H_{n/2},
so ``fht(a || b) = fht(a + b) || fht(a - b)``. All operation counters count
additions and subtractions, the only arithmetic in a Hadamard transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import make_rng
from .metering import FlopCounter, charge


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


def _log2(n: int) -> int:
    return n.bit_length() - 1


def _butterfly(X: np.ndarray) -> np.ndarray:
    """H @ X along axis 0, iterative radix-2 butterflies (X is overwritten)."""
    n = X.shape[0]
    rest = X.shape[1:]
    h = 1
    while h < n:
        # view rows as (blocks, 2, h): pair row i with row i + h inside each block
        Y = X.reshape((n // (2 * h), 2, h) + rest)
        a = Y[:, 0].copy()
        Y[:, 0] += Y[:, 1]
        Y[:, 1] *= -1.0
        Y[:, 1] += a
        h *= 2
    return X


def fht(v: np.ndarray, counter: FlopCounter | None = None, category: str = "transform") -> np.ndarray:
    """H_n v for a vector of power-of-2 length; n log2 n additions."""
    v = np.array(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("fht expects a vector; use fht_matrix for 2-d input")
    n = v.shape[0]
    if not is_pow2(n):
        raise ValueError(f"fht length must be a power of 2, got {n}")
    charge(counter, category, n * _log2(n))
    return _butterfly(v)


def fht_matrix(M: np.ndarray, counter: FlopCounter | None = None, category: str = "transform") -> np.ndarray:
    """H @ M column by column; cols * rows * log2(rows) additions."""
    M = np.array(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("fht_matrix expects a 2-d array")
    n, d = M.shape
    if not is_pow2(n):
        raise ValueError(f"fht_matrix row count must be a power of 2, got {n}")
    charge(counter, category, d * n * _log2(n))
    return _butterfly(M)


@dataclass
class OpCount:
    adds: int = 0


def _symfht(A: np.ndarray, ops: OpCount) -> np.ndarray:
    n = A.shape[0]
    if n == 1:
        return A.copy()
    h = n // 2
    B11 = _symfht(A[:h, :h], ops)
    B22 = _symfht(A[h:, h:], ops)
    # B12 = H A12 H via two one-sided transforms
    B12 = _butterfly(_butterfly(A[:h, h:].T.copy()).T.copy())
    ops.adds += 2 * h * h * _log2(h)
    B12t = B12.T
    C11 = B11 + B12t
    C12 = B11 - B12
    C21 = B12 + B22
    C22 = B12t - B22
    out = np.empty_like(A)
    out[:h, :h] = C11 + C21
    out[:h, h:] = C12 + C22
    out[h:, :h] = out[:h, h:].T
    out[h:, h:] = C12 - C22
    ops.adds += 4 * h * h + 3 * h * h
    return out


def sym_fht(A: np.ndarray, counter: FlopCounter | None = None, category: str = "transform",
            check: bool = True) -> tuple[np.ndarray, int]:
    """H A H for symmetric A of power-of-2 order.

    Returns the transformed matrix and the number of additions performed.
    The lower-left block of every level is filled by transposition, which is
    where the saving over two one-sided transforms comes from.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym_fht needs a square matrix, got {A.shape}")
    n = A.shape[0]
    if not is_pow2(n):
        raise ValueError(f"sym_fht order must be a power of 2, got {n}")
    if check:
        scale = max(np.abs(A).max(initial=0.0), 1e-300)
        if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("sym_fht input is not symmetric")
    ops = OpCount()
    out = _symfht(A, ops)
    charge(counter, category, ops.adds)
    return out, ops.adds


def symfht_bound(n: int) -> float:
    return n * n * (2.5 + np.log2(n))


@dataclass(frozen=True)
class SignDiagonal:
    signs: np.ndarray

    @property
    def n(self) -> int:
        return self.signs.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.n)

    @classmethod
    def random(cls, n: int, seed) -> SignDiagonal:
        if not is_pow2(n):
            raise ValueError(f"sign diagonal size must be a power of 2, got {n}")
        rng = make_rng(seed)
        return cls(rng.choice(np.array([-1.0, 1.0]), size=n))

    @classmethod
    def ones(cls, n: int) -> SignDiagonal:
        return cls(np.ones(n))


@dataclass(frozen=True)
class RhtOperator:
    """Q = H D on the zero-padded space of size m2 = next_pow2(m)."""

    m: int
    D: SignDiagonal = field(repr=False)

    @property
    def m2(self) -> int:
        return self.D.n

    @classmethod
    def random(cls, m: int, seed) -> RhtOperator:
        return cls(m, SignDiagonal.random(next_pow2(m), seed))

    @classmethod
    def plus(cls, m: int) -> RhtOperator:
        return cls(m, SignDiagonal.ones(next_pow2(m)))

    def dense(self) -> np.ndarray:
        """Explicit Q (for small checks only)."""
        return fht_matrix(np.diag(self.D.signs * self.D.scale))


def pad_rows(M: np.ndarray, m2: int) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == m2:
        return M
    out = np.zeros((m2,) + M.shape[1:])
    out[: M.shape[0]] = M
    return out


def rht_apply(op: RhtOperator, M: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    """Q @ M. M may have op.m rows (zero-padded here) or op.m2 rows; output has m2 rows."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] not in (op.m, op.m2):
        raise ValueError(f"rht_apply: operator expects {op.m} rows, got {M.shape[0]}")
    X = pad_rows(M, op.m2)
    vec = X.ndim == 1
    X = X.reshape(op.m2, -1) if vec else X
    d = op.D.signs * op.D.scale
    charge(counter, "transform", X.size)
    Y = fht_matrix(d[:, None] * X, counter)
    return Y.ravel() if vec else Y


def rht_apply_transpose(op: RhtOperator, M: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    """Q^T @ M = D H M; input has m2 rows, output has m2 rows."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != op.m2:
        raise ValueError(f"rht_apply_transpose expects {op.m2} rows, got {M.shape[0]}")
    vec = M.ndim == 1
    X = M.reshape(op.m2, -1) if vec else M
    Y = fht_matrix(X, counter)
    charge(counter, "transform", Y.size)
    Y *= (op.D.signs * op.D.scale)[:, None]
    return Y.ravel() if vec else Y


def rht_apply_two_sided(op: RhtOperator, A: np.ndarray, counter: FlopCounter | None = None,
                        pad_diagonal: float = 0.0) -> np.ndarray:
    """Q A Q^T = (1/m2) SymFHT(diag(d) A diag(d)) for symmetric A.

    When A is smaller than m2 it is embedded with ``pad_diagonal`` on the
    padded diagonal so that a shifted PSD system stays nonsingular.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (op.m, op.m2):
        raise ValueError(f"rht_apply_two_sided: bad shape {A.shape} for m={op.m}")
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("rht_apply_two_sided input is not symmetric")
    n, m2 = A.shape[0], op.m2
    if n < m2:
        P = np.zeros((m2, m2))
        P[:n, :n] = A
        P[np.arange(n, m2), np.arange(n, m2)] = pad_diagonal
        A = P
    s = op.D.signs
    DAD = s[:, None] * A * s[None, :]
    out, _ = sym_fht(DAD, counter, check=False)
    out *= 1.0 / m2
    charge(counter, "transform", 2 * m2 * m2)
    return out


@dataclass(frozen=True)
class SrhtSketch:
    """Pi = sqrt(n2/tau) I_T Q acting on the (padded) column space."""

    tau: int
    rows: np.ndarray
    rht: RhtOperator

    @classmethod
    def random(cls, n: int, tau: int, seed) -> SrhtSketch:
        rng = make_rng(seed)
        n2 = next_pow2(n)
        if tau > n2:
            raise ValueError(f"sketch size {tau} exceeds padded dimension {n2}")
        signs = SignDiagonal(rng.choice(np.array([-1.0, 1.0]), size=n2))
        rows = np.sort(rng.choice(n2, size=tau, replace=False))
        return cls(tau, rows, RhtOperator(n, signs))


def srht_apply(sk: SrhtSketch, A_S: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    """A_S Pi^T, an s-by-tau sketch; charges s n log n + s tau."""
    A_S = np.asarray(A_S, dtype=np.float64)
    s, n = A_S.shape
    if n != sk.rht.m and n != sk.rht.m2:
        raise ValueError(f"srht: expected {sk.rht.m} columns, got {n}")
    n2 = sk.rht.m2
    X = pad_rows(A_S.T, n2) * sk.rht.D.signs[:, None]
    Y = fht_matrix(X, counter)  # = H D A_S^T, n2 x s
    charge(counter, "transform", s * sk.tau)
    # sqrt(n2/tau) * (1/sqrt(n2)) from the RHT scale
    return Y[sk.rows].T * (1.0 / np.sqrt(sk.tau))


def srht_sketch(A_S: np.ndarray, tau: int, seed, counter: FlopCounter | None = None) -> np.ndarray:
    sk = SrhtSketch.random(np.asarray(A_S).shape[1], tau, seed)
    return srht_apply(sk, A_S, counter)


def hadamard(n: int) -> np.ndarray:
    """Dense H_n by the block recursion (reference only)."""
    if not is_pow2(n):
        raise ValueError("n must be a power of 2")
    H = np.ones((1, 1))
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H
