"""CD++: block coordinate descent for PSD systems.

The system is conjugated by a randomized Hadamard transform on both sides
(via SymFHT), then solved with principal-submatrix steps that reuse exact
Cholesky factors of A_SS + lam I, sharing the momentum, adaptive-rate and
stopping machinery with K++.
"""
from __future__ import annotations

import math

import numpy as np

from .iteration import (BlockCache, MomentumState, ResidualEstimator, SolverConfig, SolverFailure,
                        cdpp_fresh_budget)
from .linalg import CholeskyFactor, cholesky, make_rng, triangular_solve
from .metering import ConvergenceTrace, FlopCounter, TraceRecord, charge, true_residual_cost
from .problems import LinearProblem
from .transforms import (RhtOperator, next_pow2, pad_rows, rht_apply, rht_apply_transpose,
                         rht_apply_two_sided)


def block_factor(Abar: np.ndarray, S: np.ndarray, lam: float,
                 counter: FlopCounter | None = None) -> CholeskyFactor:
    G = Abar[np.ix_(S, S)].copy()
    G[np.diag_indices(len(S))] += lam
    return cholesky(G, counter=counter)


def cd_step(Abar: np.ndarray, S: np.ndarray, R: CholeskyFactor, x: np.ndarray, b_S: np.ndarray,
            counter: FlopCounter | None = None) -> tuple[np.ndarray, np.ndarray]:
    """w = I_S^T (A_SS + lam I)^{-1} (A_S x - b_S). Returns (w, block residual)."""
    s, n = len(S), Abar.shape[0]
    if R.dim != s:
        raise ValueError(f"factor dimension {R.dim} does not match block size {s}")
    r = Abar[S] @ x - b_S
    charge(counter, "projection", 2 * s * n)
    z = triangular_solve(R, r, "upper-transposed", counter, "projection")
    z = triangular_solve(R, z, "upper", counter, "projection")
    w = np.zeros(n)
    w[S] = z
    charge(counter, "projection", s)
    return w, r


def solve_psd(problem: LinearProblem, config: SolverConfig, x0: np.ndarray | None = None,
              counter: FlopCounter | None = None) -> tuple[np.ndarray, ConvergenceTrace]:
    if problem.kind != "psd":
        raise ValueError("CD++ needs a psd problem")
    A0, b0 = problem.A, problem.b
    n = A0.shape[0]
    s = config.block_size
    if s > n:
        raise ValueError(f"block size {s} exceeds n = {n}")
    counter = counter if counter is not None else FlopCounter()
    rng = make_rng(config.seed)
    trace = ConvergenceTrace("cdpp", config.snapshot())
    bnorm = float(np.linalg.norm(b0))

    if config.rht:
        op = RhtOperator.random(n, rng)
        pad = problem.phi if problem.phi > 0 else 1.0
        Abar = rht_apply_two_sided(op, A0, counter, pad_diagonal=pad)
        bbar = rht_apply(op, b0, counter)
        xbar = np.zeros(op.m2) if x0 is None else rht_apply(op, np.asarray(x0, dtype=np.float64))
    else:
        op = None
        Abar, bbar = A0, b0.copy()
        xbar = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    N = Abar.shape[0]

    def to_original(xb: np.ndarray, category: str = "transform") -> np.ndarray:
        if op is None:
            return xb.copy()
        charge(counter, category, N * int(math.log2(N)) + N)
        return rht_apply_transpose(op, xb)[:n]

    def true_res(xb: np.ndarray) -> float:
        x = to_original(xb, "instrumentation")
        charge(counter, "instrumentation", true_residual_cost(n, n))
        return float(np.linalg.norm(A0 @ x - b0) / bnorm)

    if bnorm == 0.0:
        trace.append(TraceRecord(0, counter.total, 0.0, 0.0, config.rho0))
        trace.status = "converged"
        return np.zeros(n), trace

    zeta = math.ceil(N / s)
    eta = (s / (2 * N) if config.eta is None else config.eta) if config.acceleration else 0.0
    est = ResidualEstimator(zeta, N / s)
    cache = BlockCache(N, s, cdpp_fresh_budget(N, s), config.memoization)
    mom = MomentumState(np.zeros(N), config.rho0, eta)
    every = zeta if config.true_residual_every is None else config.true_residual_every
    threshold = config.eps**2 * bnorm**2
    first_est = None

    if config.max_iters == 0:
        trace.append(TraceRecord(0, counter.total, float("nan"), true_res(xbar), mom.rho))
        trace.status = "budget"
        return to_original(xbar, "instrumentation"), trace

    for t in range(config.max_iters):
        blk, _ = cache.sample(t, rng)
        S = blk.S
        if blk.factor is None:
            blk.factor = block_factor(Abar, S, config.lam, counter)
        w, r = cd_step(Abar, S, blk.factor, xbar, bbar[S], counter)
        if not config.memoization:
            blk.factor = None
        mom.step(w, xbar)
        charge(counter, "projection", 4 * N if eta else N)

        est.add(t, float(r @ r))
        stop = False
        if est.is_checkpoint(t):
            # literal accumulator comparison, no window normalization
            stop = est.E1 <= threshold
            if not stop and config.acceleration:
                rho = est.update_rate()
                if rho is not None:
                    mom.rho = rho
            est.reset()

        res_est = math.sqrt(est.estimate()) / bnorm
        first_est = res_est if first_est is None else first_est
        want_true = stop or (every and (t + 1) % every == 0)
        trace.append(TraceRecord(t + 1, counter.total, res_est,
                                 true_res(xbar) if want_true else None, mom.rho))
        if not np.all(np.isfinite(xbar)) or not math.isfinite(res_est) or res_est > 1e6 * max(first_est, 1e-300):
            trace.status = "error"
            raise SolverFailure(f"CD++ diverged at iteration {t + 1}", trace)
        if stop:
            trace.status = "converged"
            return to_original(xbar), trace
        if config.flop_budget is not None and counter.total >= config.flop_budget:
            break
    trace.status = "budget"
    if trace.last.res_true is None:
        trace.last.res_true = true_res(xbar)
    return to_original(xbar), trace


def kzpp_exact_step(Phi_bar: np.ndarray, S: np.ndarray, z: np.ndarray, b_S: np.ndarray,
                    lam: float) -> np.ndarray:
    """Exact regularized projection step on the implicit factor system."""
    P_S = Phi_bar[S]
    G = P_S @ P_S.T + lam * np.eye(len(S))
    return P_S.T @ np.linalg.solve(G, P_S @ z - b_S)


def cdpp_kzpp_reduction_check(Phi: np.ndarray, b: np.ndarray, s: int, iters: int, seed,
                              lam: float = 1e-3, rho: float = 0.2, eta: float = 0.1,
                              use_rht: bool = True) -> float:
    """Run CD++ on A = Phi Phi^T and K++ on Phi with one shared block sequence.

    Returns max_t ||z_t - Phi_bar^T xbar_t||, which vanishes when the CD++
    iterates are the image of the implicit K++ iterates.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    n = Phi.shape[0]
    rng = make_rng(seed)
    if use_rht:
        op = RhtOperator.random(n, rng)
        Phi_bar = rht_apply(op, Phi)
        bbar = rht_apply(op, b)
    else:
        Phi_bar, bbar = pad_rows(Phi, next_pow2(n)), pad_rows(b, next_pow2(n))
    Abar = Phi_bar @ Phi_bar.T
    N = Abar.shape[0]
    xbar, z = np.zeros(N), np.zeros(Phi.shape[1])
    mx, mz = MomentumState(np.zeros(N), rho, eta), MomentumState(np.zeros(Phi.shape[1]), rho, eta)
    dev = 0.0
    for _ in range(iters):
        S = np.sort(rng.choice(N, size=s, replace=False))
        w_cd, _ = cd_step(Abar, S, block_factor(Abar, S, lam), xbar, bbar[S])
        w_kz = kzpp_exact_step(Phi_bar, S, z, bbar[S], lam)
        mx.step(w_cd, xbar)
        mz.step(w_kz, z)
        dev = max(dev, float(np.linalg.norm(z - Phi_bar.T @ xbar)))
    return dev
