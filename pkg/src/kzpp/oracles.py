"""Exact small-scale oracles for the quantities that drive K++ convergence.

Everything here works on tiny dense instances by enumeration (or seeded
Monte Carlo when enumeration is too large): condition numbers, the expected
regularized projection and its rate parameters, PSD orderings, DPP
identities, and trajectory-level checks of the momentum recursion.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .iteration import MomentumState
from .kaczmarz import regularized_projection_exact
from .linalg import as_matrix, make_rng
from .transforms import RhtOperator, rht_apply

RANK_CUTOFF = 1e-10
EXHAUSTIVE_CAP = 100_000


class RankDetectionError(ValueError):
    """Eigenvalues too close to the rank cutoff to separate range from null space."""


# ---------------------------------------------------------------- spectra

@dataclass
class SpectralSummary:
    sigma: np.ndarray
    rank: int
    kappa_bar: dict[int, float] = field(default_factory=dict)
    lam_bar: dict[int, float] = field(default_factory=dict)
    d_lam: dict[float, float] = field(default_factory=dict)


def _rank(sigma: np.ndarray) -> int:
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > RANK_CUTOFF * sigma[0]))


def spectral_summary(A, ks=(), lams=()) -> SpectralSummary:
    A = as_matrix(A)
    if min(A.shape) > 2048:
        raise ValueError("spectral summary is limited to min(m, n) <= 2048")
    sigma = np.linalg.svd(A, compute_uv=False)
    r = _rank(sigma)
    out = SpectralSummary(sigma, r)
    for k in ks:
        if not 0 <= k < r:
            raise ValueError(f"k = {k} must be below rank(A) = {r}")
        tail = sigma[k:r]
        out.kappa_bar[k] = float(np.sqrt(np.sum(tail**2)) / tail[-1] / np.sqrt(r - k))
        out.lam_bar[k] = float(np.sum(sigma[k:] ** 2) / k) if k > 0 else float("inf")
    for lam in lams:
        out.d_lam[lam] = effective_dimension(sigma[:r], lam)
    return out


def effective_dimension(sigma: np.ndarray, lam: float) -> float:
    """sum sigma_i^2 / (sigma_i^2 + lam); lam = 0 gives the rank, lam = inf gives 0."""
    s2 = np.asarray(sigma, dtype=np.float64) ** 2
    if math.isinf(lam):
        return 0.0
    if lam == 0:
        return float(_rank(np.sqrt(s2)))
    return float(np.sum(s2 / (s2 + lam)))


def classical_condition(A, k: int = 0) -> float:
    """sigma_{k+1} / sigma_min^+."""
    sigma = np.linalg.svd(as_matrix(A), compute_uv=False)
    r = _rank(sigma)
    if not 0 <= k < r:
        raise ValueError(f"k = {k} must be below rank(A) = {r}")
    return float(sigma[k] / sigma[r - 1])


# ------------------------------------------------------- projections

def projection_matrix(A, S, lam: float) -> np.ndarray:
    """P = A_S^T (A_S A_S^T + lam I)^+ A_S."""
    A_S = as_matrix(A)[np.asarray(S)]
    G = A_S @ A_S.T + lam * np.eye(A_S.shape[0])
    P = A_S.T @ pinv_psd(G) @ A_S
    return 0.5 * (P + P.T)


def _eig_split(M: np.ndarray, cutoff: float, strict: bool):
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    top = max(abs(w).max(initial=0.0), 1e-300)
    keep = w > cutoff * top
    if strict:
        near = (w > 1e-2 * cutoff * top) & (w < 1e2 * cutoff * top)
        if near.any():
            lo = w[~keep].max(initial=0.0) / top
            hi = w[keep].min(initial=top) / top
            raise RankDetectionError(
                f"eigenvalues straddle the rank cutoff {cutoff:g}: relative gap {lo:.3e} .. {hi:.3e}")
    return w, V, keep


def pinv_psd(M: np.ndarray, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    w, V, keep = _eig_split(M, cutoff, strict=False)
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def pinv_sqrt(M: np.ndarray, cutoff: float = RANK_CUTOFF, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """(M^{+/2}, orthonormal basis of range(M)) for symmetric PSD M."""
    w, V, keep = _eig_split(M, cutoff, strict)
    Vr = V[:, keep]
    return (Vr / np.sqrt(w[keep])) @ Vr.T, Vr


@dataclass
class ProjectionEnsemble:
    A: np.ndarray
    s: int
    lam: float
    subsets: list[tuple[int, ...]]
    weights: np.ndarray
    mats: np.ndarray
    mean: np.ndarray
    exhaustive: bool

    def __len__(self) -> int:
        return len(self.subsets)


def expected_projection(A, s: int, lam: float, mode: str = "exhaustive", samples: int = 100_000,
                        seed=0) -> tuple[np.ndarray, ProjectionEnsemble]:
    """Mean of P_{lam,S} over uniform s-subsets, by enumeration or sampling.

    Monte Carlo draws are grouped by subset, so each distinct projection is
    formed once and weighted by its empirical frequency.
    """
    A = as_matrix(A)
    m = A.shape[0]
    if not 1 <= s <= m:
        raise ValueError(f"block size {s} must lie in [1, {m}]")
    if mode == "exhaustive":
        count = math.comb(m, s)
        if count > EXHAUSTIVE_CAP:
            raise ValueError(f"C({m},{s}) = {count} subsets exceeds the enumeration cap {EXHAUSTIVE_CAP}")
        subsets = list(itertools.combinations(range(m), s))
        weights = np.full(len(subsets), 1.0 / len(subsets))
    elif mode == "monte-carlo":
        rng = make_rng(seed)
        draws = np.sort(np.argsort(rng.random((samples, m)), axis=1)[:, :s], axis=1)
        uniq, counts = np.unique(draws, axis=0, return_counts=True)
        subsets = [tuple(int(i) for i in row) for row in uniq]
        weights = counts / samples
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mats = np.stack([projection_matrix(A, S, lam) for S in subsets])
    mean = np.einsum("i,ijk->jk", weights, mats)
    mean = 0.5 * (mean + mean.T)
    return mean, ProjectionEnsemble(A, s, lam, subsets, weights, mats, mean, mode == "exhaustive")


@dataclass
class RateReport:
    mu: float
    nu: float
    rho_bar: float
    rank: int
    c: float | None = None
    decay: dict[int, float] = field(default_factory=dict)


def mu_nu_rho(ens: ProjectionEnsemble) -> RateReport:
    """mu = lambda_min^+(Pbar), nu = lambda_max E[(Pbar^{+/2} P Pbar^{+/2})^2]."""
    Q, Vr = pinv_sqrt(ens.mean)
    w = np.linalg.eigvalsh(Vr.T @ ens.mean @ Vr)
    mu = float(w.min())
    C = Q @ ens.mats @ Q
    second = np.einsum("i,ijk->jk", ens.weights, C @ C)
    nu = float(np.linalg.eigvalsh(0.5 * (second + second.T)).max())
    return RateReport(mu, nu, math.sqrt(mu / nu), Vr.shape[1])


# ---------------------------------------------------- PSD lower bound

@dataclass
class LowerCoefficient:
    c: float | None
    nu_bound: float | None = None
    nu: float | None = None
    holds: bool | None = None
    message: str = ""


def regularized_gram(A, lam_bar: float) -> np.ndarray:
    """A^T A (A^T A + lam_bar I)^{-1}."""
    A = as_matrix(A)
    G = A.T @ A
    M = G @ np.linalg.inv(G + lam_bar * np.eye(G.shape[0]))
    return 0.5 * (M + M.T)


def psd_lower_coefficient(Pbar: np.ndarray, A, lam_bar: float, lam: float | None = None,
                          nu: float | None = None) -> LowerCoefficient:
    """Largest c with Pbar >= c A^T A (A^T A + lam_bar I)^{-1}; optionally checks nu <= 2 lam_bar/(c lam)."""
    M = regularized_gram(A, lam_bar)
    Mh, Vm = pinv_sqrt(M, strict=False)
    _, Vp = pinv_sqrt(Pbar, strict=False)
    if Vm.shape[1] != Vp.shape[1] or np.linalg.norm(Vp - Vm @ (Vm.T @ Vp)) > 1e-8:
        return LowerCoefficient(None, message=f"null spaces differ: rank(Pbar) = {Vp.shape[1]}, "
                                              f"rank(A) = {Vm.shape[1]}")
    K = Vm.T @ Mh @ Pbar @ Mh @ Vm
    c = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    out = LowerCoefficient(c)
    if lam is not None and nu is not None and lam > 0:
        out.nu, out.nu_bound = nu, 2.0 * lam_bar / (min(c, 1.0) * lam)
        out.holds = nu <= out.nu_bound * (1 + 1e-10)
    return out


def range_min_eig(M: np.ndarray, basis: np.ndarray) -> float:
    K = basis.T @ M @ basis
    return float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())


# ---------------------------------------------------- block memoization

def block_memo_check(A, s: int, lam: float, B: int, trials: int, seed=0, tol: float = 1e-10) -> float:
    """Fraction of trials in which the mean of B i.i.d. projections dominates Pbar/2 on range(Pbar)."""
    Pbar, ens = expected_projection(A, s, lam)
    _, Vr = pinv_sqrt(Pbar, strict=False)
    rng = make_rng(seed)
    ok = 0
    for _ in range(trials):
        idx = rng.integers(len(ens), size=B)
        avg = ens.mats[idx].mean(axis=0)
        ok += range_min_eig(avg - 0.5 * Pbar, Vr) >= -tol
    return ok / trials


# ---------------------------------------------------------------- DPPs

@dataclass
class DppDistribution:
    subsets: list[tuple[int, ...]]
    probs: np.ndarray

    def expected_size(self) -> float:
        return float(sum(p * len(S) for S, p in zip(self.subsets, self.probs)))

    def expectation(self, f) -> np.ndarray:
        return sum(p * f(S) for S, p in zip(self.subsets, self.probs))


def dpp_enumerate(L) -> DppDistribution:
    """Pr(S) = det(L_SS) / det(L + I) over all 2^m subsets (det of the empty block is 1)."""
    L = as_matrix(L)
    m = L.shape[0]
    if m > 12:
        raise ValueError(f"DPP enumeration is limited to m <= 12, got {m}")
    if np.abs(L - L.T).max(initial=0.0) > 1e-10 * max(np.abs(L).max(initial=0.0), 1.0):
        raise ValueError("DPP kernel must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (L + L.T))
    if w.size and w.min() < -1e-10 * max(abs(w).max(), 1.0):
        raise ValueError(f"DPP kernel is not PSD (min eigenvalue {w.min():.3e})")
    subsets, dets = [], []
    for size in range(m + 1):
        for S in itertools.combinations(range(m), size):
            subsets.append(S)
            dets.append(np.linalg.det(L[np.ix_(S, S)]) if S else 1.0)
    dets = np.maximum(np.array(dets), 0.0)
    return DppDistribution(subsets, dets / dets.sum())


def dpp_expected_size_formula(L) -> float:
    """tr(L (L + I)^{-1})."""
    L = as_matrix(L)
    return float(np.trace(L @ np.linalg.inv(L + np.eye(L.shape[0]))))


@dataclass
class RdppReport:
    holds: bool
    min_eig: float
    lam_bar: float
    expected_size: float


def rdpp_kernel(A, k: int) -> tuple[np.ndarray, float]:
    A = as_matrix(A)
    m = A.shape[0]
    summ = spectral_summary(A, ks=[k])
    lam_bar = summ.lam_bar[k]
    L = (m / (lam_bar * (m - k))) * (A @ A.T) + (k / (m - k)) * np.eye(m)
    return L, lam_bar


def rdpp_inequality_check(A, k: int, slack: float = 1e-9) -> RdppReport:
    """E[(I + m/(k lam_bar) A_S^T A_S)^{-1}] <= lam_bar (A^T A + lam_bar I)^{-1} under the R-DPP."""
    A = as_matrix(A)
    m, n = A.shape
    if m > 10:
        raise ValueError(f"R-DPP enumeration is limited to m <= 10, got {m}")
    L, lam_bar = rdpp_kernel(A, k)
    dist = dpp_enumerate(L)
    scale = m / (k * lam_bar)
    I = np.eye(n)
    lhs = dist.expectation(lambda S: np.linalg.inv(I + scale * A[list(S)].T @ A[list(S)]))
    rhs = lam_bar * np.linalg.inv(A.T @ A + lam_bar * I)
    gap = rhs - lhs
    mn = float(np.linalg.eigvalsh(0.5 * (gap + gap.T)).min())
    return RdppReport(mn >= -slack, mn, lam_bar, dist.expected_size())


# ----------------------------------------------------- momentum checks

@dataclass
class ThreeSequence:
    x: list[np.ndarray]
    y: list[np.ndarray]
    v: list[np.ndarray]
    delta: list[float] = field(default_factory=list)


def three_sequence_params(rho: float, eta: float) -> tuple[float, float, float]:
    """(alpha, beta, gamma) matching momentum parameters (rho, eta)."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]; gamma is undefined at rho = 0")
    gamma = 1.0 + eta / rho - eta
    if abs(gamma - 1.0) < 1e-14:
        raise ValueError("gamma = 1 (eta = 0 or rho = 1): the momentum map divides by gamma - 1")
    return rho / (1.0 + rho), 1.0 - rho, gamma


def three_sequence_run(A, b, rho: float, eta: float, blocks, lam: float, x0=None,
                       x_star=None, Pbar=None) -> ThreeSequence:
    """x = a v + (1-a) y;  y' = x - w;  v' = b v + (1-b) x - g w, with exact projections.

    Returns x_0..x_T (x_T formed from the final y, v). With x_star and Pbar
    also records the Lyapunov value ||v - x*||^2_{Pbar^+} + ||y - x*||^2 / mu~.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    alpha, beta, gamma = three_sequence_params(rho, eta)
    y = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=np.float64)
    v = y.copy()
    out = ThreeSequence([], [y.copy()], [v.copy()])
    Pp = None
    if x_star is not None and Pbar is not None:
        Pp = pinv_psd(Pbar)
        mu_t = rho**2 / (rho + eta * (1.0 - rho))

    def lyap():
        if Pp is not None:
            dv, dy = v - x_star, y - x_star
            out.delta.append(float(dv @ Pp @ dv + dy @ dy / mu_t))

    lyap()
    for S in blocks:
        x = alpha * v + (1.0 - alpha) * y
        out.x.append(x)
        w = regularized_projection_exact(A, np.asarray(S), x, b[np.asarray(S)], lam)
        y = x - w
        v = beta * v + (1.0 - beta) * x - gamma * w
        out.y.append(y.copy())
        out.v.append(v.copy())
        lyap()
    out.x.append(alpha * v + (1.0 - alpha) * y)
    return out


def momentum_run(A, b, rho: float, eta: float, blocks, lam: float, x0=None) -> list[np.ndarray]:
    """The solver's form m' = (1-rho)/(1+rho)(m - w), x' = x - w + eta m', same blocks."""
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=np.float64)
    mom = MomentumState(np.zeros_like(x), rho, eta)
    xs = [x.copy()]
    for S in blocks:
        S = np.asarray(S)
        mom.step(regularized_projection_exact(A, S, x, b[S], lam), x)
        xs.append(x.copy())
    return xs


def momentum_equivalence(A, b, rho: float, eta: float, iters: int, s: int, lam: float = 0.0,
                         seed=0) -> float:
    """Max over t of ||x_t(three-sequence) - x_t(momentum)|| on a shared block sequence."""
    A = as_matrix(A)
    rng = make_rng(seed)
    blocks = [np.sort(rng.choice(A.shape[0], size=s, replace=False)) for _ in range(iters)]
    ts = three_sequence_run(A, b, rho, eta, blocks, lam)
    ms = momentum_run(A, b, rho, eta, blocks, lam)
    return max(float(np.linalg.norm(p - q)) for p, q in zip(ts.x, ms))


@dataclass
class RateBoundReport:
    rho: float
    eta: float
    rates: RateReport
    checkpoints: list[int]
    mean_error: list[float]
    bound: list[float]
    max_ratio: float
    passed: bool


def rate_bound_check(A, b, s: int, lam: float, trials: int = 200, checkpoints=(10, 50, 100),
                     seed=0, slack: float = 1.2) -> RateBoundReport:
    """Mean ||x_t - x*||^2 over seeded runs vs 8(1 - rho/2)^t ||x_0 - x*||^2.

    Uses rho = rho_bar/2 and eta = 1/(2 nu) from enumerated mu, nu, exact
    projections, x_0 = 0 and the minimum-norm solution x*.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    Pbar, ens = expected_projection(A, s, lam)
    rates = mu_nu_rho(ens)
    rho, eta = rates.rho_bar / 2.0, 1.0 / (2.0 * rates.nu)
    x_star = np.linalg.pinv(A) @ b
    e0 = float(x_star @ x_star)
    horizon = max(checkpoints)
    sums = np.zeros(horizon + 1)
    rng = make_rng(seed)
    for _ in range(trials):
        blocks = [ens.subsets[i] for i in rng.integers(len(ens), size=horizon)]
        xs = momentum_run(A, b, rho, eta, blocks, lam)
        sums += [float((x - x_star) @ (x - x_star)) for x in xs]
    mean = sums / trials
    cps = list(checkpoints)
    bound = [8.0 * (1.0 - rho / 2.0) ** t * e0 for t in cps]
    err = [float(mean[t]) for t in cps]
    ratio = max(e / bd for e, bd in zip(err, bound))
    rates.decay = {t: float(math.log(max(mean[t], 1e-300) / e0) / t) for t in cps}
    return RateBoundReport(rho, eta, rates, cps, err, bound, ratio, ratio <= slack)


# ------------------------------------------- lower bound after the RHT

def rht_lower_bound_check(A, k: int, s: int, lam: float | None = None, samples: int = 2000,
                          seed=0, tol: float = 1e-9) -> float:
    """min eigenvalue of Pbar - M/2 on range(A) for the RHT-preprocessed rows.

    M = A^T A (A^T A + lam_bar I)^{-1}. Pbar is a Monte Carlo mean when the
    subsets are too many to enumerate. A nonnegative value (up to tol) means
    the half-strength lower bound holds on this instance.
    """
    A = as_matrix(A)
    rng = make_rng(seed)
    Ab = rht_apply(RhtOperator.random(A.shape[0], rng), A)
    lam_bar = spectral_summary(A, ks=[k]).lam_bar[k]
    lam = (k / Ab.shape[0]) * lam_bar if lam is None else lam
    mode = "exhaustive" if math.comb(Ab.shape[0], s) <= EXHAUSTIVE_CAP else "monte-carlo"
    Pbar, _ = expected_projection(Ab, s, lam, mode, samples, rng)
    _, Vm = pinv_sqrt(regularized_gram(A, lam_bar), strict=False)
    return range_min_eig(Pbar - 0.5 * regularized_gram(A, lam_bar), Vm) + tol


# ---------------------------------------------------------------- report

@dataclass
class OracleResult:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


def write_report(results: list[OracleResult], path: str | Path | None = None) -> str:
    text = json.dumps([asdict(r) for r in results], indent=2, default=float)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
