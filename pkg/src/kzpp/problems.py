"""Test systems: synthetic low-rank matrices, kernel matrices, CSV and binary I/O."""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .linalg import as_matrix, make_rng, random_orthogonal

MAGIC = b"KZPP"
FORMAT_VERSION = 1
_KINDS = ("general", "psd")


class ProblemFormatError(ValueError):
    pass


@dataclass
class LinearProblem:
    kind: str
    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray | None = None
    phi: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        self.A = as_matrix(self.A)
        self.b = np.asarray(self.b, dtype=np.float64)
        m, n = self.A.shape
        if self.b.shape != (m,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({m},)")
        if self.kind == "psd":
            if m != n:
                raise ValueError("psd problem must be square")
            scale = max(np.abs(self.A).max(initial=0.0), 1e-300)
            if np.abs(self.A - self.A.T).max(initial=0.0) > 1e-10 * scale:
                raise ValueError("psd problem matrix is not symmetric")
        if self.x_star is not None:
            self.x_star = np.asarray(self.x_star, dtype=np.float64)
            if self.x_star.shape != (n,):
                raise ValueError(f"x_star has shape {self.x_star.shape}, expected ({n},)")
            res = np.linalg.norm(self.A @ self.x_star - self.b)
            if res > 1e-8 * max(np.linalg.norm(self.b), 1e-300):
                raise ValueError(f"x_star does not solve the system (residual {res:.3e})")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def relative_residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.A @ x - self.b) / np.linalg.norm(self.b))

    def solution(self) -> np.ndarray:
        """x_star if stored, else a dense least-squares solve (small problems only)."""
        if self.x_star is not None:
            return self.x_star
        if min(self.A.shape) > 2048:
            raise ValueError("direct solve refused above n = 2048")
        if self.kind == "psd":
            return np.linalg.solve(self.A, self.b)
        return np.linalg.lstsq(self.A, self.b, rcond=None)[0]


@dataclass(frozen=True)
class SpectrumSpec:
    effective_rank: int
    tail_strength: float = 0.01

    def check(self, m: int, n: int) -> None:
        if not 0 < self.tail_strength < 1:
            raise ValueError(f"tail_strength must lie in (0, 1), got {self.tail_strength}")
        if not 1 <= self.effective_rank < min(m, n):
            raise ValueError(
                f"effective_rank {self.effective_rank} must be below min(m, n) = {min(m, n)}"
            )


@dataclass(frozen=True)
class KernelSpec:
    kernel: str = "gaussian"
    gamma: float = 0.1

    def __post_init__(self):
        if self.kernel not in ("gaussian", "laplacian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.gamma > 0:
            raise ValueError("kernel width gamma must be positive")


def spectrum_profile(k: int, spec: SpectrumSpec) -> np.ndarray:
    """Bell-shaped head plus slowly decaying tail, summed, for i = 0..k-1."""
    i = np.arange(k, dtype=np.float64)
    er, ts = spec.effective_rank, spec.tail_strength
    return (1 - ts) * np.exp(-((i / er) ** 2)) + ts * np.exp(-0.1 * i / er)


def make_low_rank(m: int, n: int, spec: SpectrumSpec, seed) -> np.ndarray:
    spec.check(m, n)
    rng = make_rng(seed)
    k = min(m, n)
    U = random_orthogonal(m, rng)[:, :k]
    V = random_orthogonal(n, rng)[:, :k]
    return (U * spectrum_profile(k, spec)) @ V.T


def kernel_matrix(data: np.ndarray, spec: KernelSpec) -> np.ndarray:
    X = as_matrix(data)
    sq = np.sum(X * X, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D2, 0.0, out=D2)
    # exact symmetry and zero self-distance, whatever the rounding above did
    D2 = np.triu(D2, 1)
    D2 = D2 + D2.T
    if spec.kernel == "gaussian":
        return np.exp(-spec.gamma * D2)
    return np.exp(-spec.gamma * np.sqrt(D2))


def psd_problem(K: np.ndarray, phi: float = 1e-3, seed=0, metadata: dict | None = None) -> LinearProblem:
    K = as_matrix(K)
    if K.shape[0] != K.shape[1] or np.abs(K - K.T).max(initial=0.0) > 1e-10 * max(np.abs(K).max(), 1e-300):
        raise ValueError("kernel matrix must be square and symmetric")
    A = K + phi * np.eye(K.shape[0])
    b = make_rng(seed).standard_normal(K.shape[0])
    meta = {"generator": "psd_problem", "phi": phi, "rhs_seed": _seed_repr(seed)}
    meta.update(metadata or {})
    return LinearProblem("psd", A, b, phi=phi, metadata=meta)


def consistent_problem(A: np.ndarray, seed=0, metadata: dict | None = None) -> LinearProblem:
    """General system with b = A x_star for a standard normal x_star."""
    A = as_matrix(A)
    x = make_rng(seed).standard_normal(A.shape[1])
    meta = {"generator": "consistent_problem", "rhs_seed": _seed_repr(seed)}
    meta.update(metadata or {})
    return LinearProblem("general", A, A @ x, x_star=x, metadata=meta)


def low_rank_problem(m: int, n: int, effective_rank: int, tail_strength: float = 0.01,
                     seed=0) -> LinearProblem:
    spec = SpectrumSpec(effective_rank, tail_strength)
    rng = make_rng(seed)
    A = make_low_rank(m, n, spec, rng)
    return consistent_problem(A, rng, {
        "generator": "low_rank", "m": m, "n": n, "effective_rank": effective_rank,
        "tail_strength": tail_strength, "seed": _seed_repr(seed),
    })


def synthetic_points(n: int, d: int, seed) -> np.ndarray:
    """Clustered Gaussian point cloud standing in for a tabular dataset."""
    rng = make_rng(seed)
    n_clusters = 8
    centers = rng.standard_normal((n_clusters, d)) * 3.0
    labels = rng.integers(0, n_clusters, size=n)
    return centers[labels] + rng.standard_normal((n, d))


def kernel_problem(data: np.ndarray, kernel: str = "gaussian", gamma: float = 0.1,
                   phi: float = 1e-3, seed=0) -> LinearProblem:
    spec = KernelSpec(kernel, gamma)
    K = kernel_matrix(data, spec)
    return psd_problem(K, phi, seed, {"generator": "kernel", "kernel": kernel, "gamma": gamma})


def _seed_repr(seed):
    return seed if isinstance(seed, (int, type(None))) else "generator"


def load_csv(path: str | Path, row_limit: int | None = None) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty CSV file")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1  # header row
    data = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if row_limit is not None and len(data) >= row_limit:
            break
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"{path}: cannot parse {cell!r} at row {i} col {j}") from None
            if not np.isfinite(v):
                raise ValueError(f"{path}: non-finite value at row {i} col {j}")
            vals.append(v)
        if data and len(vals) != len(data[0]):
            raise ValueError(f"{path}: row {i} has {len(vals)} columns, expected {len(data[0])}")
        data.append(vals)
    if not data:
        raise ValueError(f"{path}: no data rows")
    return np.array(data, dtype=np.float64)


def save_problem(path: str | Path, problem: LinearProblem) -> None:
    m, n = problem.A.shape
    meta = json.dumps(problem.metadata, sort_keys=True, default=str).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<B", _KINDS.index(problem.kind)),
        struct.pack("<QQ", m, n),
        struct.pack("<d", problem.phi),
        problem.A.astype("<f8").tobytes(order="C"),
        problem.b.astype("<f8").tobytes(),
    ]
    if problem.x_star is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts += [struct.pack("<B", 1), problem.x_star.astype("<f8").tobytes()]
    parts += [struct.pack("<Q", len(meta)), meta]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.buf):
            raise ProblemFormatError("truncated problem file")
        out = self.buf[self.pos:self.pos + k]
        self.pos += k
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def load_problem(path: str | Path) -> LinearProblem:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise ProblemFormatError(f"{path}: not a problem file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise ProblemFormatError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    (kind,) = r.unpack("<B")
    if kind >= len(_KINDS):
        raise ProblemFormatError(f"{path}: unknown kind code {kind}")
    m, n = r.unpack("<QQ")
    (phi,) = r.unpack("<d")
    A = r.floats(m * n).reshape(m, n)
    b = r.floats(m)
    (has_x,) = r.unpack("<B")
    x_star = r.floats(n) if has_x else None
    (mlen,) = r.unpack("<Q")
    meta = json.loads(r.take(mlen).decode("utf-8"))
    if r.pos != len(r.buf):
        raise ProblemFormatError(f"{path}: trailing bytes after metadata")
    return LinearProblem(_KINDS[kind], A, b, x_star=x_star, phi=phi, metadata=meta)
