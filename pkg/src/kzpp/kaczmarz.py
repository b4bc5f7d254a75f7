"""Kaczmarz++ for general consistent systems.

Row-side randomized Hadamard preprocessing, online block memoization,
regularized block projections (sketch-preconditioned LSQR or exact), and
adaptive momentum with a windowed residual estimate for stopping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import LinearOperator, lsqr_solve
from .iteration import (BlockCache, MomentumState, ResidualEstimator, SolverConfig,
                        SolverFailure, kzpp_fresh_budget)
from .linalg import CholeskyFactor, cholesky, gemm, make_rng, svd, triangular_solve
from .metering import ConvergenceTrace, FlopCounter, TraceRecord, charge, true_residual_cost
from .problems import LinearProblem
from .transforms import RhtOperator, SrhtSketch, next_pow2, rht_apply, srht_apply


def regularized_projection_exact(A: np.ndarray, S: np.ndarray, x: np.ndarray, b_S: np.ndarray,
                                 lam: float) -> np.ndarray:
    """w = A_S^T (A_S A_S^T + lam I)^{-1} (A_S x - b_S); pseudoinverse when lam = 0."""
    A_S = np.asarray(A)[S]
    r = A_S @ x - b_S
    G = A_S @ A_S.T + lam * np.eye(len(S))
    if lam > 0:
        return A_S.T @ np.linalg.solve(G, r)
    U, sig, V = svd(A_S)
    keep = sig > 1e-12 * max(sig.max(initial=0.0), 1e-300)
    # A_S^+ r, the minimum-norm solution of A_S w = r
    return V[:, keep] @ ((U[:, keep].T @ r) / sig[keep])


@dataclass
class SketchFactor:
    """Preconditioner for one block: R with R^T R = Ahat Ahat^T + lam I."""

    R: CholeskyFactor


def build_sketch_factor(A_S: np.ndarray, tau: int, lam: float, rng: np.random.Generator,
                        counter: FlopCounter | None = None) -> SketchFactor:
    s, n = A_S.shape
    sk = SrhtSketch.random(n, tau, rng)
    Ahat = srht_apply(sk, A_S, counter)
    G = gemm(Ahat, Ahat, trans_b=True, counter=counter, category="factorization")
    G[np.diag_indices(s)] += lam
    return SketchFactor(cholesky(G, counter=counter))


def preconditioned_operator(A_S: np.ndarray, R: CholeskyFactor, lam: float,
                            counter: FlopCounter | None = None) -> LinearOperator:
    """Implicit R^{-T} [A_S  sqrt(lam) I], never formed explicitly."""
    s, n = A_S.shape
    sl = math.sqrt(lam)

    def matvec(z):
        y = A_S @ z[:n] + sl * z[n:]
        charge(counter, "inner-solver", 2 * s * n + 2 * s)
        return _rt_solve(R, y, counter)

    def rmatvec(u):
        y = _r_solve(R, u, counter)
        charge(counter, "inner-solver", 2 * s * n + s)
        return np.concatenate([A_S.T @ y, sl * y])

    return LinearOperator((s, n + s), matvec, rmatvec)


def _rt_solve(R: CholeskyFactor, y, counter):
    return triangular_solve(R, y, "upper-transposed", counter, "inner-solver")


def _r_solve(R: CholeskyFactor, y, counter):
    return triangular_solve(R, y, "upper", counter, "inner-solver")


def proj_lsqr(A_S: np.ndarray, r: np.ndarray, factor: SketchFactor, lam: float, t_max: int,
              counter: FlopCounter | None = None) -> np.ndarray:
    """w-part of t_max LSQR steps on R^{-T}[A_S sqrt(lam) I][w; v] = R^{-T} r."""
    n = A_S.shape[1]
    op = preconditioned_operator(A_S, factor.R, lam, counter)
    rhs = _rt_solve(factor.R, r, counter)
    z = lsqr_solve(op, rhs, t_max, counter)
    return z[:n]


@dataclass
class ExactFactor:
    R: CholeskyFactor


def build_exact_factor(A_S: np.ndarray, lam: float, counter: FlopCounter | None = None) -> ExactFactor:
    s = A_S.shape[0]
    G = gemm(A_S, A_S, trans_b=True, counter=counter, category="factorization")
    G[np.diag_indices(s)] += lam
    return ExactFactor(cholesky(G, counter=counter))


def proj_exact(A_S: np.ndarray, r: np.ndarray, factor: ExactFactor,
               counter: FlopCounter | None = None) -> np.ndarray:
    y = factor.R.solve(r, counter, "projection")
    charge(counter, "projection", 2 * A_S.shape[0] * A_S.shape[1])
    return A_S.T @ y


@dataclass
class Preprocessed:
    A: np.ndarray
    b: np.ndarray
    op: RhtOperator | None


def preprocess_rows(A: np.ndarray, b: np.ndarray, use_rht: bool, seed,
                    counter: FlopCounter | None = None) -> Preprocessed:
    """Apply Q = HD to the rows of [A b], padding rows to the next power of 2."""
    if not use_rht:
        return Preprocessed(A, b, None)
    op = RhtOperator.random(A.shape[0], seed)
    Ab = rht_apply(op, np.column_stack([A, b]), counter)
    return Preprocessed(np.ascontiguousarray(Ab[:, :-1]), Ab[:, -1].copy(), op)


def solve(problem: LinearProblem, config: SolverConfig, x0: np.ndarray | None = None,
          counter: FlopCounter | None = None) -> tuple[np.ndarray, ConvergenceTrace]:
    A0, b0 = problem.A, problem.b
    m, n = A0.shape
    s = config.block_size
    if s > min(m, n):
        raise ValueError(f"block size {s} exceeds min(m, n) = {min(m, n)}")
    counter = counter if counter is not None else FlopCounter()
    rng = make_rng(config.seed)
    trace = ConvergenceTrace("kzpp", config.snapshot())

    pre = preprocess_rows(A0, b0, config.rht, rng, counter)
    A, b = pre.A, pre.b
    rows = A.shape[0]
    bnorm = float(np.linalg.norm(b0))
    if bnorm == 0.0:
        trace.append(TraceRecord(0, counter.total, 0.0, 0.0, config.rho0))
        trace.status = "converged"
        return np.zeros(n), trace

    zeta = math.ceil(rows / s)
    eta = (s / (2 * n) if config.eta is None else config.eta) if config.acceleration else 0.0
    tau = min(int(round(config.tau_factor * s)), next_pow2(n))
    tau = max(tau, 1)
    est = ResidualEstimator(zeta, rows / s)
    cache = BlockCache(rows, s, kzpp_fresh_budget(rows, n, s), config.memoization)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    mom = MomentumState(np.zeros(n), config.rho0, eta)
    every = zeta if config.true_residual_every is None else config.true_residual_every
    threshold = config.eps**2 * bnorm**2
    first_est = None

    def true_res(xv):
        charge(counter, "instrumentation", true_residual_cost(m, n))
        return float(np.linalg.norm(A0 @ xv - b0) / bnorm)

    for t in range(config.max_iters):
        blk, _ = cache.sample(t, rng)
        S = blk.S
        A_S = A[S]
        r = A_S @ x - b[S]
        charge(counter, "projection", 2 * s * n + s)
        if blk.factor is None:
            if config.projection == "lsqr":
                blk.factor = build_sketch_factor(A_S, tau, config.lam, rng, counter)
            else:
                blk.factor = build_exact_factor(A_S, config.lam, counter)
        if config.projection == "lsqr":
            w = proj_lsqr(A_S, r, blk.factor, config.lam, config.t_max, counter)
        else:
            w = proj_exact(A_S, r, blk.factor, counter)
        if not config.memoization:
            blk.factor = None
        mom.step(w, x)
        charge(counter, "projection", 4 * n if eta else n)

        rsq = float(r @ r)
        est.add(t, rsq)
        stop = False
        if est.is_checkpoint(t):
            stop = est.window_estimate() <= threshold
            if not stop and config.acceleration:
                rho = est.update_rate()
                if rho is not None:
                    mom.rho = rho
            est.reset()

        res_est = math.sqrt(est.estimate()) / bnorm
        first_est = res_est if first_est is None else first_est
        want_true = stop or (every and (t + 1) % every == 0)
        rec = TraceRecord(t + 1, counter.total, res_est, true_res(x) if want_true else None, mom.rho)
        trace.append(rec)
        if not np.all(np.isfinite(x)) or not math.isfinite(res_est) or res_est > 1e6 * max(first_est, 1e-300):
            trace.status = "error"
            raise SolverFailure(f"K++ diverged at iteration {t + 1}", trace)
        if stop:
            trace.status = "converged"
            return x, trace
        if config.flop_budget is not None and counter.total >= config.flop_budget:
            break
    trace.status = "budget"
    if trace.last.res_true is None:
        trace.last.res_true = true_res(x)
    return x, trace
