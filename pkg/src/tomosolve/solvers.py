"""Solver registry: supported solver/penalty combinations and dispatch."""

from dataclasses import dataclass, field

import numpy as np

from . import dual as _dual
from . import primal as _primal
from .model import ProblemInstance, ProjectionInstance, Regularizer

SOLVERS = ("fgm", "rcd", "powell3", "cg", "dual_fgm", "dual_rca", "penalty")
RANDOMIZED = frozenset({"rcd", "powell3", "dual_rca"})

# Which penalty each solver accepts.  Unsupported combinations are rejected
# up front with a message naming the pair.
SUPPORTED = {
    "fgm": frozenset({"ridge", "entropy", "lasso"}),
    "rcd": frozenset({"ridge", "lasso"}),
    "powell3": frozenset({"ridge", "lasso"}),
    "cg": frozenset({"ridge"}),
    "dual_fgm": frozenset({"ridge", "entropy"}),
    "dual_rca": frozenset({"ridge"}),
    "penalty": frozenset({"ridge", "entropy"}),
}

DEFAULT_PENALTY_SCHEDULE = (10.0, 40.0, 160.0, 640.0, 2560.0, 10240.0)


class UnsupportedCombination(ValueError):
    def __init__(self, solver, variant):
        super().__init__(
            "unsupported combination: solver %r with the %r model" % (solver, variant))
        self.solver = solver
        self.variant = variant


def check_supported(solver, variant):
    if solver not in SUPPORTED:
        raise ValueError("unknown solver %r (choose from %s)" % (solver, ", ".join(SOLVERS)))
    if variant not in SUPPORTED[solver]:
        raise UnsupportedCombination(solver, variant)


def make_regularizer(variant, lam, x_g=None, R=None, n=None):
    if variant == "ridge":
        return Regularizer.ridge(lam, x_g)
    if variant == "entropy":
        if R is None:
            R = float(np.sum(x_g))
        return Regularizer.entropy(lam, x_g, R)
    if variant == "lasso":
        return Regularizer.lasso(lam)
    raise ValueError("unknown regularizer %r" % variant)


@dataclass
class DispatchResult:
    x: np.ndarray
    iters: int
    flops: int
    obj_trace: list = field(default_factory=list)
    cert_trace: list = field(default_factory=list)
    raw: object = None


def dispatch(solver, A, b, x_g, variant, lam, cfg, eps=None, eps_tilde=None,
             penalty_schedule=None):
    """Build the right instance for ``solver`` and run it."""
    check_supported(solver, variant)
    if solver in ("dual_fgm", "penalty"):
        reg = make_regularizer(variant, 1.0, x_g=x_g)
        proj = ProjectionInstance(A, b, reg)
        if solver == "dual_fgm":
            if eps_tilde is None:
                eps_tilde = 0.01 * float(np.linalg.norm(b))
            if eps is None:
                eps = eps_tilde
            rep = _dual.solve_projection_fgm(proj, eps, eps_tilde, cfg)
            return DispatchResult(rep.x_final, rep.iters, rep.flops,
                                  rep.cert_trace, rep.residual_trace, rep)
        steps = _dual.solve_penalty(proj, penalty_schedule or DEFAULT_PENALTY_SCHEDULE, cfg)
        last = steps[-1]
        return DispatchResult(last.x, 0, 0, [], [], steps)

    reg = make_regularizer(variant, lam, x_g=x_g)
    inst = ProblemInstance(A, b, reg)
    fn = {"fgm": _primal.solve_fgm, "rcd": _primal.solve_rcd,
          "powell3": _primal.solve_powell3, "cg": _primal.solve_cg,
          "dual_rca": _dual.solve_dual_rca}[solver]
    rep = fn(inst, cfg)
    return DispatchResult(rep.x_final, rep.iters, rep.flops,
                          rep.objective_trace, rep.certificate_trace, rep)
