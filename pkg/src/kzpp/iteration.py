"""Pieces shared by the K++ and CD++ loops: config, momentum, residual
estimation with adaptive rate tracking, and online block selection."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .metering import ConvergenceTrace


class SolverFailure(RuntimeError):
    """Numerical failure during a solve; carries the partial trace."""

    def __init__(self, message: str, trace: ConvergenceTrace):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverConfig:
    block_size: int
    lam: float = 1e-8
    eta: float | None = None  # None means s / (2n)
    rho0: float = 0.0
    t_max: int = 8
    tau_factor: float = 2.0
    eps: float = 1e-8
    max_iters: int = 10_000
    flop_budget: int | None = None
    seed: int = 0
    rht: bool = True
    memoization: bool = True
    acceleration: bool = True
    projection: str = "lsqr"  # K++ only: "lsqr" or "exact"
    true_residual_every: int | None = None  # None means every zeta iterations; 0 disables

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block size must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.projection not in ("lsqr", "exact"):
            raise ValueError(f"unknown projection mode {self.projection!r}")
        if self.eta is not None and not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not 0 <= self.rho0 < 1:
            raise ValueError("rho0 must lie in [0, 1)")

    def snapshot(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class MomentumState:
    m: np.ndarray
    rho: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    def step(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        """m <- (1-rho)/(1+rho) (m - w); x <- x - w + eta m. Both in place."""
        c = (1.0 - self.rho) / (1.0 + self.rho)
        self.m -= w
        self.m *= c
        x -= w
        if self.eta:
            x += self.eta * self.m
        return x


def averaging_weight(i: int) -> float:
    """a_{i-1} / a_i for a_i = (i+1)^{ln(i+1)}."""
    a = lambda j: (j + 1.0) ** math.log(j + 1.0)
    return a(i - 1) / a(i)


@dataclass
class ResidualEstimator:
    """Two-window accumulators plus a sliding estimate for tracing.

    ``scale`` is rows/s, turning a block residual into an estimate of the
    full squared residual.
    """

    zeta: int
    scale: float
    E0: float = 0.0
    E1: float = 0.0
    r: float = 1.0
    i: int = 0
    window: deque = field(default_factory=deque)

    def add(self, t: int, rsq: float) -> None:
        if (t % (2 * self.zeta)) < self.zeta:
            self.E0 += rsq
        else:
            self.E1 += rsq
        self.window.append(rsq)
        if len(self.window) > self.zeta:
            self.window.popleft()

    def is_checkpoint(self, t: int) -> bool:
        return t % (2 * self.zeta) == 2 * self.zeta - 1

    def estimate(self) -> float:
        """Windowed mean of scale * ||r_t||^2 over the last zeta steps."""
        if not self.window:
            return float("nan")
        return self.scale * sum(self.window) / len(self.window)

    def window_estimate(self) -> float:
        """Normalized second-window estimate (1/zeta) sum scale ||r||^2."""
        return self.scale * self.E1 / self.zeta

    def update_rate(self) -> float | None:
        """Fold E1/E0 into the weighted ratio; returns the new rho or None if stalled."""
        if self.E0 <= 0.0:
            return None
        self.i += 1
        q = averaging_weight(self.i)
        self.r = self.r * q + (1.0 - q) * (self.E1 / self.E0)
        return rho_from_ratio(self.r, self.zeta)

    def reset(self) -> None:
        self.E0 = self.E1 = 0.0


def rho_from_ratio(r: float, zeta: int) -> float:
    rho = 1.0 - r ** (1.0 / zeta) if r > 0 else 1.0
    return float(min(max(rho, 0.0), 0.99))


@dataclass
class CachedBlock:
    S: np.ndarray
    factor: Any = None


@dataclass
class BlockCache:
    """Online block memoization: fresh blocks with probability min(1, B0/t)."""

    rows: int
    s: int
    B0: float
    memoization: bool = True
    blocks: list[CachedBlock] = field(default_factory=list)
    fresh_draws: int = 0

    def probability(self, t: int) -> float:
        if not self.memoization or t == 0:
            return 1.0
        return min(1.0, self.B0 / t)

    def sample(self, t: int, rng: np.random.Generator) -> tuple[CachedBlock, bool]:
        p = self.probability(t)
        if p >= 1.0 or not self.blocks or rng.random() < p:
            S = np.sort(rng.choice(self.rows, size=self.s, replace=False))
            blk = CachedBlock(S)
            self.fresh_draws += 1
            if self.memoization:
                self.blocks.append(blk)
            return blk, True
        return self.blocks[int(rng.integers(len(self.blocks)))], False

    def __len__(self) -> int:
        return len(self.blocks)


def kzpp_fresh_budget(m: int, n: int, s: int) -> float:
    """(1/t) numerator for K++: min((m/s) log m, (n/s) log m)."""
    return min(m / s, n / s) * math.log(m)


def cdpp_fresh_budget(n: int, s: int) -> float:
    return (n / s) * math.log(n)
