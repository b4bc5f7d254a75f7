"""Kaczmarz++ and CD++: accelerated randomized block solvers for linear systems."""
from .baselines import KrylovConfig, cg_solve, gmres_solve, lsqr_solve
from .cdpp import solve_psd
from .iteration import SolverConfig, SolverFailure
from .kaczmarz import solve
from .metering import ConvergenceTrace, FlopCounter, TraceRecord, export_trace, load_trace
from .problems import (LinearProblem, kernel_problem, load_problem, low_rank_problem, save_problem,
                       synthetic_points)

__all__ = [
    "ConvergenceTrace", "FlopCounter", "KrylovConfig", "LinearProblem", "SolverConfig", "SolverFailure",
    "TraceRecord", "cg_solve", "export_trace", "gmres_solve", "kernel_problem", "load_problem",
    "load_trace", "low_rank_problem", "lsqr_solve", "save_problem", "solve", "solve_psd",
    "synthetic_points",
]
__version__ = "0.1.0"
