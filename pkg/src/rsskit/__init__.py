"""Residual smoothing schemes (RSS) for stiff semilinear problems.

Compact fourth-order operators, fast Poisson preconditioning, RSS/NLRSS time
stepping with Richardson extrapolation, stability bounds, and a
stream-function/vorticity driven cavity solver.
"""

from .errors import (
    AllUnstable,
    BlowUp,
    DimensionMismatch,
    GridTooSmall,
    HypothesisViolated,
    MaxIterationsExceeded,
    NoConvergence,
    NotConverged,
    RSSError,
    SingularMatrix,
    SolveFailure,
    ZeroPreconditioner,
)
from .grid_ops import Grid1D, Grid2D, Grid3D, KronSumOperator, build_compact_d1, build_compact_d2
from .solvers import FastPoissonContext, fast_poisson_solve, gmres
from .stability import dtmax_allen_cahn, dtmax_linear, dtmax_nonsymmetric, empirical_dtmax, tau_opt
from .timestep import Kind, Outcome, SchemeConfig, SemilinearProblem, march, march_to_steady, step

__version__ = "0.1.0"
