"""Reference Krylov solvers: CG, full GMRES and LSQR.

CG and GMRES report FLOPs from the closed-form models in ``metering``;
LSQR is also the inner engine of the K++ projection step and charges
instrumented counts there.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .linalg import NotPositiveDefinite, as_matrix
from .metering import (ConvergenceTrace, FlopCounter, TraceRecord, charge, model_cg_iteration,
                       model_gmres_total)


@dataclass
class KrylovConfig:
    eps: float = 1e-8
    max_iters: int | None = None  # None means n
    restart: int | None = None  # GMRES only; None = full basis
    true_residual: bool = True
    seed: int = 0  # unused, kept for manifest symmetry

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass
class LinearOperator:
    """Implicit matrix: forward and transpose products only."""

    shape: tuple[int, int]
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def dense(cls, M: np.ndarray) -> LinearOperator:
        M = np.asarray(M, dtype=np.float64)
        return cls(M.shape, lambda v: M @ v, lambda u: M.T @ u)


def cg_solve(A: np.ndarray, b: np.ndarray, config: KrylovConfig | None = None,
             x0: np.ndarray | None = None) -> tuple[np.ndarray, ConvergenceTrace]:
    """Plain Hestenes-Stiefel conjugate gradients (no preconditioning)."""
    cfg = config or KrylovConfig()
    A = as_matrix(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    trace = ConvergenceTrace("cg", asdict(cfg), flop_source="model")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    p = r.copy()
    rr = r @ r
    max_iters = cfg.max_iters if cfg.max_iters is not None else n
    flops = 0
    if bnorm == 0:
        trace.append(TraceRecord(0, 0, 0.0, 0.0))
        trace.status = "converged"
        return x, trace
    trace.append(TraceRecord(0, 0, np.sqrt(rr) / bnorm, np.linalg.norm(A @ x - b) / bnorm))
    for t in range(1, max_iters + 1):
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            trace.status = "error"
            raise NotPositiveDefinite(f"CG breakdown at iteration {t}: p^T A p = {pAp:.3e}")
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        flops += model_cg_iteration(n)
        est = np.sqrt(rr) / bnorm
        true = np.linalg.norm(A @ x - b) / bnorm if cfg.true_residual else None
        trace.append(TraceRecord(t, flops, est, true))
        if (true if true is not None else est) <= cfg.eps:
            trace.status = "converged"
            return x, trace
    trace.status = "budget"
    return x, trace


def _givens(a: float, b: float) -> tuple[float, float, float]:
    if b == 0.0:
        return 1.0, 0.0, a
    r = np.hypot(a, b)
    return a / r, b / r, r


def gmres_solve(A: np.ndarray, b: np.ndarray, config: KrylovConfig | None = None,
                x0: np.ndarray | None = None) -> tuple[np.ndarray, ConvergenceTrace]:
    """GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    Without ``restart`` the whole Krylov basis is kept. FLOPs per cycle of T
    steps follow the 2n^2 T + 4nT(T+1) model.
    """
    cfg = config or KrylovConfig()
    A = as_matrix(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    trace = ConvergenceTrace("gmres", asdict(cfg), flop_source="model")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    max_iters = cfg.max_iters if cfg.max_iters is not None else n
    cycle_len = cfg.restart or max_iters
    if bnorm == 0:
        trace.append(TraceRecord(0, 0, 0.0, 0.0))
        trace.status = "converged"
        return x, trace
    r = b - A @ x
    trace.append(TraceRecord(0, 0, np.linalg.norm(r) / bnorm, np.linalg.norm(r) / bnorm))
    it, done_flops = 0, 0
    while it < max_iters:
        r = b - A @ x
        beta = np.linalg.norm(r)
        if beta / bnorm <= cfg.eps:
            trace.status = "converged"
            return x, trace
        k_max = min(cycle_len, max_iters - it)
        V = np.zeros((k_max + 1, n))
        Hm = np.zeros((k_max + 1, k_max))
        cs, sn = np.zeros(k_max), np.zeros(k_max)
        g = np.zeros(k_max + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        converged = False
        for j in range(k_max):
            w = A @ V[j]
            for i in range(j + 1):
                Hm[i, j] = w @ V[i]
                w -= Hm[i, j] * V[i]
            Hm[j + 1, j] = np.linalg.norm(w)
            breakdown = Hm[j + 1, j] <= 1e-14 * np.abs(Hm[: j + 1, j]).max(initial=1e-300)
            if not breakdown:
                V[j + 1] = w / Hm[j + 1, j]
            for i in range(j):
                h0, h1 = Hm[i, j], Hm[i + 1, j]
                Hm[i, j] = cs[i] * h0 + sn[i] * h1
                Hm[i + 1, j] = -sn[i] * h0 + cs[i] * h1
            cs[j], sn[j], Hm[j, j] = _givens(Hm[j, j], Hm[j + 1, j])
            Hm[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            it += 1
            flops = done_flops + model_gmres_total(n, k)
            est = abs(g[k]) / bnorm
            true = None
            if cfg.true_residual:
                y = np.linalg.solve(np.triu(Hm[:k, :k]), g[:k])
                true = np.linalg.norm(A @ (x + V[:k].T @ y) - b) / bnorm
            trace.append(TraceRecord(it, flops, est, true))
            if breakdown or (true if true is not None else est) <= cfg.eps:
                converged = True
                break
        y = np.linalg.solve(np.triu(Hm[:k, :k]), g[:k])
        x = x + V[:k].T @ y
        done_flops += model_gmres_total(n, k)
        if converged:
            trace.status = "converged"
            return x, trace
    trace.status = "budget"
    return x, trace


def lsqr_solve(op: LinearOperator, b: np.ndarray, iterations: int,
               counter: FlopCounter | None = None, category: str = "inner-solver") -> np.ndarray:
    """Paige-Saunders LSQR from x = 0, exactly ``iterations`` steps.

    Stops early only on an exact breakdown (zero bidiagonalization norm),
    where the current iterate is already the least-squares solution.
    Products are charged by ``op`` itself; vector updates are charged here.
    """
    m, n = op.shape
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros(n)
    u = b.copy()
    beta = np.linalg.norm(u)
    if beta == 0.0:
        return x
    u /= beta
    v = op.rmatvec(u)
    alpha = np.linalg.norm(v)
    charge(counter, category, 3 * m + 3 * n)
    if alpha == 0.0:
        return x
    v /= alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    for _ in range(iterations):
        u = op.matvec(v) - alpha * u
        beta = np.linalg.norm(u)
        if beta > 0.0:
            u /= beta
            v = op.rmatvec(u) - beta * v
            alpha = np.linalg.norm(v)
            if alpha > 0.0:
                v /= alpha
        else:
            alpha = 0.0
        rho = np.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        x += (phi / rho) * w
        w = v - (theta / rho) * w
        charge(counter, category, 5 * m + 9 * n)
        if beta == 0.0 or alpha == 0.0:
            break
    return x
