"""FLOP accounting and convergence traces.

Our own solvers charge instrumented counts as they run. The Krylov baselines
use the closed-form per-iteration models instead, so that curves line up with
the published comparison.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

CATEGORIES = ("transform", "factorization", "projection", "inner-solver", "instrumentation")
INSTRUMENTATION = "instrumentation"
TRACE_COLUMNS = ("iter", "flops", "res_est", "res_true", "rho")


@dataclass
class FlopCounter:
    """Cumulative FLOP meter with per-category subtotals.

    ``total`` is the headline figure; instrumentation charges (true-residual
    evaluation and the like) are tracked but never added to it.
    """

    total: int = 0
    subtotals: dict[str, int] = field(default_factory=lambda: {c: 0 for c in CATEGORIES})
    log: list[tuple[str, int]] | None = None

    def charge(self, category: str, amount: int | float) -> None:
        if amount < 0:
            raise ValueError(f"negative FLOP charge {amount} for {category!r}")
        if category not in self.subtotals:
            raise KeyError(f"unknown FLOP category {category!r}")
        amount = int(math.ceil(amount))
        self.subtotals[category] += amount
        if category != INSTRUMENTATION:
            self.total += amount
        if self.log is not None:
            self.log.append((category, amount))

    def record_calls(self) -> FlopCounter:
        """Start keeping a call log so the headline can be replayed."""
        self.log = []
        return self


def charge(counter: FlopCounter | None, category: str, amount: int | float) -> None:
    if counter is not None:
        counter.charge(category, amount)


def replay(log: list[tuple[str, int]]) -> int:
    """Recompute the headline total from a recorded call log."""
    return sum(a for c, a in log if c != INSTRUMENTATION)


def model_cg_iteration(n: int) -> int:
    """Per-iteration cost of dense CG (scipy's implementation): 2n^2 + 11n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2 * n * n + 11 * n


def model_gmres_total(n: int, T: int) -> int:
    """Total cost of T iterations of full GMRES (pyamg's implementation)."""
    if n < 1 or T < 1:
        raise ValueError("n and T must be >= 1")
    return 2 * n * n * T + 4 * n * T * (T + 1)


def model_cholesky(s: int) -> int:
    """Cost of a dense s-by-s Cholesky factorization, ceil(s^3 / 3)."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return -(-(s**3) // 3)


def true_residual_cost(m: int, n: int) -> int:
    return 2 * m * n + 3 * m


@dataclass
class TraceRecord:
    iter: int
    flops: int
    res_est: float
    res_true: float | None = None
    rho: float = 0.0


@dataclass
class ConvergenceTrace:
    solver: str
    config: dict[str, Any] = field(default_factory=dict)
    records: list[TraceRecord] = field(default_factory=list)
    status: str = "running"
    flop_source: str = "instrumented"

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError(
                f"trace iterations must increase: {record.iter} after {self.records[-1].iter}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> TraceRecord:
        return self.records[-1]

    def flops_to(self, threshold: float, use_true: bool = True) -> int | None:
        """Headline FLOPs at the first record whose residual is <= threshold."""
        for rec in self.records:
            val = rec.res_true if use_true else rec.res_est
            if val is not None and val <= threshold:
                return rec.flops
        return None

    def iters_to(self, threshold: float, use_true: bool = True) -> int | None:
        for rec in self.records:
            val = rec.res_true if use_true else rec.res_est
            if val is not None and val <= threshold:
                return rec.iter
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "solver": self.solver,
            "status": self.status,
            "flop_source": self.flop_source,
            "config": self.config,
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ConvergenceTrace:
        trace = cls(
            solver=data["solver"],
            config=dict(data.get("config", {})),
            status=data.get("status", "running"),
            flop_source=data.get("flop_source", "instrumented"),
        )
        for r in data["records"]:
            trace.append(TraceRecord(**r))
        return trace


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def export_trace(trace: ConvergenceTrace, fmt: str, path: str | Path) -> None:
    """Write a completed trace as CSV (fixed column order) or JSON."""
    if not trace.records:
        raise ValueError("refusing to export an empty trace")
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for r in trace.records:
                writer.writerow([r.iter, r.flops, _fmt(r.res_est), _fmt(r.res_true), _fmt(r.rho)])
    elif fmt == "json":
        path.write_text(json.dumps(trace.to_dict(), indent=1, default=_json_default))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def load_trace(path: str | Path) -> ConvergenceTrace:
    return ConvergenceTrace.from_dict(json.loads(Path(path).read_text()))


def _json_default(obj: Any) -> Any:
    # numpy scalars sneak into config snapshots
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
