"""Command-line front end: generate, solve, bench, verify.

Exit codes: 0 success, 1 numerical failure (divergence or budget exhausted,
or a failed verification), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import oracles
from .baselines import KrylovConfig, cg_solve, gmres_solve
from .cdpp import cdpp_kzpp_reduction_check, solve_psd
from .iteration import SolverConfig, SolverFailure
from .kaczmarz import solve as kzpp_solve
from .linalg import NotPositiveDefinite, make_rng
from .metering import ConvergenceTrace, FlopCounter, export_trace
from .problems import (LinearProblem, ProblemFormatError, kernel_problem, load_csv, load_problem,
                       low_rank_problem, save_problem, synthetic_points)
from .transforms import RhtOperator, fht, fht_matrix, rht_apply, sym_fht, symfht_bound

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
KAPPA_KS = (8, 16, 32, 64)
SUITES = ("transforms", "rates", "memoization", "dpp", "reduction", "all")


class UsageError(Exception):
    pass


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    if args.kind == "lowrank":
        conflicts = [f for f in ("kernel", "gamma", "phi", "csv", "points", "dim") if getattr(args, f) is not None]
        if conflicts:
            raise UsageError(f"kernel flags not allowed with --kind lowrank: {', '.join('--' + c for c in conflicts)}")
        if args.m is None or args.n is None or args.effective_rank is None:
            raise UsageError("--kind lowrank needs --m, --n and --effective-rank")
        tail = 0.01 if args.tail_strength is None else args.tail_strength
        problem = low_rank_problem(args.m, args.n, args.effective_rank, tail, args.seed)
    else:
        if args.effective_rank is not None or args.tail_strength is not None:
            raise UsageError("--effective-rank/--tail-strength are lowrank-only flags")
        if args.csv is not None:
            data = load_csv(args.csv, row_limit=args.points)
            source = str(args.csv)
        else:
            points = args.points or args.n or 512
            data = synthetic_points(points, args.dim or 8, args.seed)
            source = "synthetic"
        problem = kernel_problem(data, args.kernel or "gaussian", 0.1 if args.gamma is None else args.gamma,
                                 1e-3 if args.phi is None else args.phi, args.seed)
        problem.metadata["source"] = source
    save_problem(args.out, problem)
    m, n = problem.shape
    summary: dict[str, Any] = {"out": str(args.out), "kind": problem.kind, "m": m, "n": n}
    if min(m, n) <= 2048:
        sigma = np.linalg.svd(problem.A, compute_uv=False)
        r = oracles._rank(sigma)
        ks = [k for k in KAPPA_KS if k < r]
        summ = oracles.spectral_summary(problem.A, ks=ks)
        summary["rank"] = summ.rank
        summary["kappa_bar"] = {str(k): v for k, v in summ.kappa_bar.items()}
    _emit(summary)
    return EXIT_OK


# ------------------------------------------------------------------- solve

def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        block_size=args.block_size, lam=args.lam, eta=args.eta, t_max=args.tmax,
        tau_factor=args.tau_factor, eps=args.eps, max_iters=args.max_iters,
        flop_budget=args.flop_budget, seed=args.seed, rht=not args.no_rht,
        memoization=not args.no_memo, acceleration=not args.no_accel, projection=args.projection,
        true_residual_every=args.true_residual_every,
    )


def run_solver(problem: LinearProblem, solver: str, params: dict[str, Any]) -> tuple[np.ndarray, ConvergenceTrace]:
    """Dispatch one solve; ``params`` holds SolverConfig or KrylovConfig fields."""
    if solver in ("cg", "gmres"):
        if problem.A.shape[0] != problem.A.shape[1]:
            raise UsageError(f"{solver} needs a square system")
        keys = ("eps", "max_iters", "restart", "true_residual", "seed")
        cfg = KrylovConfig(**{k: v for k, v in params.items() if k in keys})
        fn = cg_solve if solver == "cg" else gmres_solve
        return fn(problem.A, problem.b, cfg)
    if solver == "cdpp":
        if problem.kind != "psd":
            raise UsageError("cdpp needs a psd problem")
        return solve_psd(problem, SolverConfig(**params))
    if solver == "kzpp":
        return kzpp_solve(problem, SolverConfig(**params))
    raise UsageError(f"unknown solver {solver!r}")


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    if args.solver in ("cg", "gmres"):
        params = {"eps": args.eps, "max_iters": args.max_iters if args.max_iters_given else None,
                  "restart": args.restart}
    else:
        params = _solver_config(args).snapshot()
    failure = None
    try:
        x, trace = run_solver(problem, args.solver, params)
    except SolverFailure as e:
        failure, trace = str(e), e.trace
    except NotPositiveDefinite as e:
        failure, trace = str(e), None
    if trace is not None and args.trace:
        fmt = "json" if str(args.trace).endswith(".json") else "csv"
        export_trace(trace, fmt, args.trace)
    summary: dict[str, Any] = {"solver": args.solver, "problem": str(args.problem)}
    if trace is not None and len(trace):
        last = trace.last
        summary.update(status=trace.status, iterations=last.iter, flops=last.flops,
                       res_est=last.res_est, res_true=last.res_true, flop_source=trace.flop_source)
    if failure is not None:
        summary["status"] = "error"
        summary["error"] = failure
    _emit(summary)
    return EXIT_OK if failure is None and trace.status == "converged" else EXIT_NUMERIC


# ------------------------------------------------------------------- bench

@dataclass
class BenchManifest:
    problems: list[dict[str, Any]]
    solvers: list[dict[str, Any]]
    seeds: list[int]
    thresholds: list[float]
    out: str = "bench_out"
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.problems or not self.solvers or not self.seeds or not self.thresholds:
            raise UsageError("manifest needs non-empty problems, solvers, seeds and thresholds")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise UsageError("manifest thresholds must be strictly descending")

    @classmethod
    def load(cls, path: str | Path) -> BenchManifest:
        data = json.loads(Path(path).read_text())
        known = {"problems", "solvers", "seeds", "thresholds", "out"}
        missing = known - {"out"} - set(data)
        if missing:
            raise UsageError(f"manifest is missing {sorted(missing)}")
        return cls(**{k: data[k] for k in known if k in data},
                   extra={k: v for k, v in data.items() if k not in known})


def build_problem(spec: dict[str, Any], seed: int) -> LinearProblem:
    """Problem from a manifest entry; ``seed`` drives the right-hand side and any randomness."""
    kind = spec.get("kind", "kernel")
    if kind == "file":
        return load_problem(spec["path"])
    if kind == "lowrank":
        return low_rank_problem(spec["m"], spec["n"], spec["effective_rank"], spec.get("tail_strength", 0.01),
                                spec.get("seed", seed))
    if kind == "kernel":
        if "csv" in spec:
            data = load_csv(spec["csv"], spec.get("points"))
        else:
            data = synthetic_points(spec.get("points", 512), spec.get("dim", 8), spec.get("data_seed", 0))
        return kernel_problem(data, spec.get("kernel", "gaussian"), spec.get("gamma", 0.1),
                              spec.get("phi", 1e-3), spec.get("rhs_seed", 0))
    raise UsageError(f"unknown problem kind {kind!r}")


BENCH_COLUMNS = ("dataset", "kernel", "width", "solver", "threshold", "flops", "converged_seeds", "note")


def bench_rows(manifest: BenchManifest) -> list[dict[str, Any]]:
    rows = []
    for pspec in manifest.problems:
        problem = build_problem(pspec, manifest.seeds[0])
        for sspec in manifest.solvers:
            sspec = dict(sspec)
            name = sspec.pop("solver")
            per_seed: list[list[float]] = [[] for _ in manifest.thresholds]
            notes = []
            for seed in manifest.seeds:
                params = dict(sspec, seed=seed)
                params.setdefault("eps", manifest.thresholds[-1])
                try:
                    _, trace = run_solver(problem, name, params)
                except (SolverFailure, NotPositiveDefinite, ValueError, UsageError) as e:
                    notes.append(f"seed {seed}: {type(e).__name__}: {e}")
                    trace = getattr(e, "trace", None)
                for j, thr in enumerate(manifest.thresholds):
                    f = trace.flops_to(thr) if trace is not None else None
                    per_seed[j].append(math.inf if f is None else float(f))
            for j, thr in enumerate(manifest.thresholds):
                vals = per_seed[j]
                med = float(np.median(vals))
                conv = sum(math.isfinite(v) for v in vals)
                note = "; ".join(notes)
                if not math.isfinite(med):
                    note = (note + "; " if note else "") + "budget exhausted before threshold"
                rows.append({
                    "dataset": pspec.get("name", pspec.get("kind", "problem")),
                    "kernel": pspec.get("kernel", "") if pspec.get("kind", "kernel") == "kernel" else "",
                    "width": pspec.get("gamma", "") if pspec.get("kind", "kernel") == "kernel" else "",
                    "solver": name, "threshold": thr,
                    "flops": "∞" if not math.isfinite(med) else f"{med:.6g}",
                    "converged_seeds": f"{conv}/{len(vals)}", "note": note,
                })
    return rows


def bench_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def cmd_bench(args) -> int:
    manifest = BenchManifest.load(args.manifest)
    out = Path(args.out or manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = bench_rows(manifest)
    text = bench_csv(rows)
    (out / "bench.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ verify

def _check(name: str, value: float, bound: float, ok: bool, detail: str = "") -> oracles.OracleResult:
    return oracles.OracleResult(name, float(value), float(bound), bool(ok), detail)


def suite_transforms(seed: int) -> list[oracles.OracleResult]:
    rng = make_rng(seed)
    out = []
    for p in range(1, 9):
        n = 2**p
        X = rng.standard_normal((n, n))
        A = X + X.T
        B, adds = sym_fht(A)
        err = float(np.abs(B - fht_matrix(fht_matrix(A).T.copy())).max())
        out.append(_check(f"symfht_equivalence_n{n}", err, 1e-11, err <= 1e-11))
        out.append(_check(f"symfht_opcount_n{n}", adds, symfht_bound(n), adds <= symfht_bound(n)))
        v = rng.standard_normal(n)
        err2 = float(np.abs(fht(fht(v)) - n * v).max())
        out.append(_check(f"fht_involution_n{n}", err2, 1e-10 * n, err2 <= 1e-10 * n))
        M = rng.standard_normal((n, 3))
        QM = rht_apply(RhtOperator.random(n, rng), M)
        iso = abs(np.linalg.norm(QM) - np.linalg.norm(M))
        out.append(_check(f"rht_isometry_n{n}", iso, 1e-10, iso <= 1e-10))
    return out


def suite_rates(seed: int) -> list[oracles.OracleResult]:
    rng = make_rng(seed)
    out = []
    A = rng.standard_normal((64, 32))
    b = A @ rng.standard_normal(32)
    dev = max(oracles.momentum_equivalence(A, b, r, e, 100, 8, 0.0, seed=rng)
              for r in (0.05, 0.2, 0.4) for e in (0.05, 0.2, 0.4))
    out.append(_check("momentum_equivalence", dev, 1e-10, dev <= 1e-10))
    A = rng.standard_normal((12, 8)) * np.linspace(1.0, 0.2, 8)
    b = A @ rng.standard_normal(8)
    lam = oracles.spectral_summary(A, ks=[3]).lam_bar[3] * 3 / 12
    rep = oracles.rate_bound_check(A, b, 3, lam, trials=200, seed=rng)
    out.append(_check("rate_bound", rep.max_ratio, 1.2, rep.passed,
                      f"rho={rep.rho:.4g} eta={rep.eta:.4g} mu={rep.rates.mu:.4g} nu={rep.rates.nu:.4g}"))
    worst_lo, worst_hi = np.inf, np.inf
    for _ in range(20):
        m = int(rng.integers(4, 11))
        n = int(rng.integers(2, m))
        s = int(rng.integers(1, min(4, m) + 1))
        _, ens = oracles.expected_projection(rng.standard_normal((m, n)), s, 0.01)
        r = oracles.mu_nu_rho(ens)
        worst_lo = min(worst_lo, r.nu - 1.0)
        worst_hi = min(worst_hi, 1.0 / r.mu - r.nu)
    out.append(_check("nu_at_least_one", worst_lo, -1e-10, worst_lo >= -1e-10))
    out.append(_check("nu_at_most_inverse_mu", worst_hi, -1e-10, worst_hi >= -1e-10))
    return out


def suite_memoization(seed: int) -> list[oracles.OracleResult]:
    rng = make_rng(seed)
    out = []
    m, s = 8, 2
    B = math.ceil(8 * (m / s) * math.log(m))
    for i in range(3):
        A = rng.standard_normal((m, 5))
        lam = oracles.spectral_summary(A, ks=[s]).lam_bar[s] * s / m
        rate = oracles.block_memo_check(A, s, lam, B, 200, seed=rng)
        out.append(_check(f"block_memo_{i}", rate, 0.95, rate >= 0.95))
    return out


def suite_dpp(seed: int) -> list[oracles.OracleResult]:
    rng = make_rng(seed)
    out = []
    worst = 0.0
    for _ in range(10):
        X = rng.standard_normal((6, 6))
        L = X @ X.T / 3
        worst = max(worst, abs(oracles.dpp_enumerate(L).expected_size() - oracles.dpp_expected_size_formula(L)))
    out.append(_check("dpp_expected_size", worst, 1e-10, worst <= 1e-10))
    mins = []
    for i in range(20):
        A = rng.standard_normal((6, 4))
        mins.append(oracles.rdpp_inequality_check(A, 1 + i % 2).min_eig)
    out.append(_check("rdpp_psd_inequality", min(mins), -1e-9, min(mins) >= -1e-9))
    return out


def suite_reduction(seed: int) -> list[oracles.OracleResult]:
    rng = make_rng(seed)
    Phi = rng.standard_normal((32, 12))
    b = rng.standard_normal(32)
    dev = cdpp_kzpp_reduction_check(Phi, b, 4, 50, rng)
    return [_check("cdpp_kzpp_reduction", dev, 1e-9, dev <= 1e-9)]


SUITE_FNS = {"transforms": suite_transforms, "rates": suite_rates, "memoization": suite_memoization,
             "dpp": suite_dpp, "reduction": suite_reduction}


def run_suite(name: str, seed: int = 0) -> list[oracles.OracleResult]:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    names = list(SUITE_FNS) if name == "all" else [name]
    return [r for n in names for r in SUITE_FNS[n](seed)]


def cmd_verify(args) -> int:
    results = run_suite(args.suite, args.seed)
    text = oracles.write_report(results, args.report)
    print(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kzpp", description="Kaczmarz++ / CD++ solvers and benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a problem file")
    g.add_argument("--kind", choices=("lowrank", "kernel"), required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--effective-rank", type=int)
    g.add_argument("--tail-strength", type=float)
    g.add_argument("--kernel", choices=("gaussian", "laplacian"))
    g.add_argument("--gamma", type=float)
    g.add_argument("--phi", type=float)
    g.add_argument("--csv", type=Path)
    g.add_argument("--points", type=int, help="kernel: number of data points (rows read from --csv)")
    g.add_argument("--dim", type=int, help="kernel: feature dimension of synthetic points")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("solve", help="run one solver on a problem file")
    s.add_argument("--problem", type=Path, required=True)
    s.add_argument("--solver", choices=("kzpp", "cdpp", "cg", "gmres"), required=True)
    s.add_argument("--block-size", type=int, default=64)
    s.add_argument("--lambda", dest="lam", type=float, default=1e-8)
    s.add_argument("--eta", type=float)
    s.add_argument("--tmax", type=int, default=8)
    s.add_argument("--tau-factor", type=float, default=2.0)
    s.add_argument("--eps", type=float, default=1e-8)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--flop-budget", type=int)
    s.add_argument("--restart", type=int, help="GMRES restart length")
    s.add_argument("--projection", choices=("lsqr", "exact"), default="lsqr")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-rht", action="store_true")
    s.add_argument("--no-memo", action="store_true")
    s.add_argument("--no-accel", action="store_true")
    s.add_argument("--trace", type=Path)
    s.add_argument("--true-residual-every", type=int)
    s.set_defaults(fn=cmd_solve)

    b = sub.add_parser("bench", help="run a benchmark manifest")
    b.add_argument("--manifest", type=Path, required=True)
    b.add_argument("--out", type=Path)
    b.set_defaults(fn=cmd_bench)

    v = sub.add_parser("verify", help="run oracle checks")
    v.add_argument("--suite", default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--report", type=Path)
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.command == "solve":
        args.max_iters_given = args.max_iters is not None
        if args.max_iters is None:
            args.max_iters = 10_000
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"kzpp {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ProblemFormatError, FileNotFoundError) as e:
        print(f"kzpp {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"kzpp {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
