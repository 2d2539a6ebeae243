"""Recover nonnegative traffic demands from link loads.

First-order solvers (primal and dual, deterministic and randomized) for
penalized least-squares regression and constrained projection over sparse
0/1 route matrices, plus a synthetic-network experiment harness.
"""

from .model import (
    ENTROPY,
    LASSO,
    RIDGE,
    ProblemInstance,
    ProjectionInstance,
    Regularizer,
    conjugate_g,
    conjugate_sigma,
)
from .routes import MatrixStats, PatternFormatError, RouteMatrix, load_pattern, stats, store_pattern
from .primal import (
    NumericalFailure,
    RestartBudgetError,
    SolverConfig,
    solve_cg,
    solve_fgm,
    solve_powell3,
    solve_rcd,
    solve_with_restarts,
)
from .dual import (
    DualState,
    ProjectionBudgetError,
    TuneResult,
    round_length,
    solve_dual_rca,
    solve_penalty,
    solve_projection_fgm,
    tune_lambda,
)
from .network import (
    SyntheticInstance,
    TopologySpec,
    build_route_matrix,
    generate_network,
    metrics,
    run_experiment,
    uniform_prior,
)
from .reports import ExperimentReport, ProjectionReport, SolveReport

__version__ = "0.1.0"
