"""Link-space machinery for the constrained projection problem.

* ``solve_projection_fgm``  accelerated gradient on the negated dual with
  primal averaging; a guessed dual-radius sets each round's length and is
  doubled whenever the averaged certificate fails to validate it;
* ``solve_dual_rca``        exact per-link coordinate ascent on the
  conjugate form of the penalized regression problem (ridge);
* ``solve_penalty``         continuation in the quadratic penalty weight,
  recovering the dual solution from the scaled residual;
* ``tune_lambda``           golden-section search for the multiplier of the
  relaxed load-fit constraint.
"""

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import _link_ascent_chunk
from .model import ProblemInstance, RIDGE
from .primal import SolverConfig, _effective_epsilon, _rng, solve_fgm
from .reports import ProjectionReport, SolveReport, TraceRecorder


@dataclass
class DualState:
    """Snapshot of the dual solve: iterates, primal average, certificate."""

    y: np.ndarray            # solution-estimate sequence in the dual space
    y_momentum: np.ndarray   # prox (momentum) sequence
    x_avg: np.ndarray        # weighted average of the inner minimizers
    a: float                 # current step weight
    A_sum: float             # accumulated step weights
    cert: float              # dual value at y plus penalty value at x_avg
    residual_norm: float     # ||A x_avg - b||
    R_tilde: float           # current dual-radius guess


class ProjectionBudgetError(RuntimeError):
    """Iteration or restart budget exhausted; carries the best-so-far report."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def round_length(L2, r_tilde, eps, eps_tilde):
    """Iterations guaranteeing certificate <= eps and residual <= eps_tilde
    when the optimal dual norm is at most r_tilde."""
    k = max(math.sqrt(8.0 * L2 * r_tilde * r_tilde / eps),
            math.sqrt(8.0 * L2 * r_tilde / eps_tilde))
    return int(math.ceil(k))


def solve_projection_fgm(proj, epsilon, epsilon_tilde, cfg=None, state_hook=None):
    """Accelerated gradient on the dual of the projection problem.

    Minimizes F(y) = -phi(y) from y = 0 with similar-triangle steps and
    averages the inner minimizers x(y) with the step weights; the averaged
    residual is the same average of the dual gradients, so it costs no
    extra products.  The stopping rule needs both the certificate
    F(y) + g(x_avg) <= eps and ||A x_avg - b|| <= eps_tilde; rounds sized
    by ``round_length`` validate the current dual-radius guess, which
    doubles on failure.  The iterate sequence does not depend on the
    guess, so a failed round simply extends the same trajectory.
    """
    if epsilon <= 0 or epsilon_tilde <= 0:
        raise ValueError("accuracy targets must be positive")
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    nnz = proj.A.nnz
    L = proj.dual_lipschitz(cfg.l_source)
    m, n = proj.m, proj.n

    v = np.zeros(m)          # prox sequence
    w = np.zeros(m)          # solution-estimate sequence
    a_sum = 0.0
    x_avg = np.zeros(n)
    res_avg = np.zeros(m)    # A x_avg - b, averaged from the dual gradients

    cert_tr = TraceRecorder(cfg.trace_stride)
    res_tr = TraceRecorder(cfg.trace_stride)
    flops = 0
    r_tilde = cfg.r_tilde_init
    k_round = round_length(L, r_tilde, epsilon, epsilon_tilde)
    rounds = []
    round_start = 0
    k = 0
    state = None
    best = None

    while True:
        a = (k + 2) / (2.0 * L)
        a_next = a_sum + a
        u = (a_sum * w + a * v) / a_next
        _, grad_u, x_u = proj.dual_oracle(u)
        v = v + a * grad_u
        w = (a_sum * w + a * v) / a_next
        x_avg = (a_sum * x_avg + a * x_u) / a_next
        res_avg = (a_sum * res_avg + a * grad_u) / a_next
        a_sum = a_next
        k += 1

        phi_w, _, _ = proj.dual_oracle(w)
        cert = -phi_w + proj.g(x_avg)
        res = float(np.linalg.norm(res_avg))
        flops += 8 * nnz
        cert_tr.add(k, cert)
        res_tr.add(k, res)
        if state_hook is not None or k >= k_round:
            state = DualState(y=w, y_momentum=v, x_avg=x_avg, a=a, A_sum=a_sum,
                              cert=cert, residual_norm=res, R_tilde=r_tilde)
            if state_hook is not None:
                state_hook(state)
        if best is None or res <= best[0]:
            best = (res, x_avg.copy(), w.copy())

        ok = cert <= epsilon and res <= epsilon_tilde
        if ok and float(np.linalg.norm(w)) <= r_tilde:
            rounds.append((r_tilde, k - round_start))
            return ProjectionReport(
                x_final=x_avg, y_final=w,
                cert_trace=cert_tr.values, residual_trace=res_tr.values,
                restarts=rounds, iters=k,
                wall_time_s=time.perf_counter() - t0, flops=flops,
                trace_iters=cert_tr.iters,
                final_state=state or DualState(w, v, x_avg, a, a_sum, cert, res, r_tilde),
            )
        if k >= k_round:
            # guess failed: double the dual radius, extend the horizon
            rounds.append((r_tilde, k - round_start))
            round_start = k
            r_tilde *= 2.0
            k_round = round_length(L, r_tilde, epsilon, epsilon_tilde)
            if len(rounds) >= cfg.max_restarts:
                break
        if k >= cfg.max_iters:
            rounds.append((r_tilde, k - round_start))
            break

    report = ProjectionReport(
        x_final=best[1], y_final=best[2],
        cert_trace=cert_tr.values, residual_trace=res_tr.values,
        restarts=rounds, iters=k,
        wall_time_s=time.perf_counter() - t0, flops=flops,
        trace_iters=cert_tr.iters, final_state=state,
    )
    raise ProjectionBudgetError("projection budget exhausted after %d iterations" % k,
                                report)


def solve_dual_rca(inst, cfg=None, chunk_size=None):
    """Exact randomized coordinate ascent on the conjugate (link) problem.

    Each step minimizes the dual objective exactly along one link
    multiplier (the section is piecewise quadratic; breakpoints are where
    primal demands clamp at zero), maintaining u = -A^T y through the
    link's row only.  The primal iterate is recovered from the conjugate
    maximizer; the primal-plus-dual value is the stopping certificate.
    """
    cfg = cfg or SolverConfig()
    if inst.reg.variant != RIDGE or inst.reg.lam <= 0:
        raise ValueError("link ascent needs a strictly convex ridge penalty")
    if inst.tikhonov_mu:
        raise ValueError("link ascent does not take an extra Tikhonov term")
    t0 = time.perf_counter()
    A = inst.A
    nnz = A.nnz
    lam = inst.reg.lam
    xg = inst.reg.x_g
    b = inst.b
    m = inst.m

    y = np.zeros(m)
    u = np.zeros(inst.n)
    eps_eff = _effective_epsilon(inst, cfg, inst.feasible_start())

    def primal_point():
        return np.maximum(0.0, xg + u / (2.0 * lam))

    def dual_value():
        xb = xg + u / (2.0 * lam)
        act = xb > 0
        gstar = float(np.sum(u[act] * xg[act] + u[act] ** 2 / (4.0 * lam)))
        gstar += -lam * float(np.sum(xg[~act] ** 2))
        return gstar + float(np.sum(0.5 * y * y + b * y))

    obj = TraceRecorder(cfg.trace_stride)
    cert_tr = TraceRecorder(cfg.trace_stride)
    dual_tr = []
    x_cur = primal_point()
    f = inst.objective(x_cur)
    gap = f + dual_value()
    flops = 4 * nnz
    obj.add(0, f)
    cert_tr.add(0, gap)
    dual_tr.append(dual_value())
    f_best, x_best = f, x_cur.copy()

    rng = _rng(cfg.seed)
    chunk = chunk_size or m
    steps = 0
    certified = False
    while steps < cfg.max_iters:
        take = min(chunk, cfg.max_iters - steps)
        coords = rng.integers(0, m, size=take)
        flops += _link_ascent_chunk(A.row_ptr, A.row_cols, b, xg, lam, coords, y, u)
        steps += take
        # periodic exact refresh of u against incremental drift
        if (steps // chunk) % 64 == 0:
            u = -A.rmatvec(y)
            flops += 2 * nnz
        x_cur = primal_point()
        f = inst.objective(x_cur)
        gval = dual_value()
        gap = f + gval
        flops += 2 * nnz
        obj.add(steps, f)
        cert_tr.add(steps, gap)
        dual_tr.append(gval)
        if f < f_best:
            f_best, x_best = f, x_cur.copy()
        if gap <= eps_eff:
            certified = True
            break
    x_final = x_cur if certified else x_best
    return SolveReport(
        x_final=x_final,
        objective_trace=obj.values,
        certificate_trace=cert_tr.values,
        iters=steps,
        flops=flops,
        restarts=[],
        wall_time_s=time.perf_counter() - t0,
        trace_iters=obj.iters,
        extras={"dual_trace": dual_tr, "y_final": y.copy()},
    )


class PenaltyStep(NamedTuple):
    K: float
    x: np.ndarray
    y_est: np.ndarray


def solve_penalty(proj, K_schedule, cfg=None):
    """Quadratic-penalty continuation for the projection problem.

    For each weight K solves the equivalent penalized regression instance
    (penalty scaled by 1/K) and reports the dual estimate K*(A x_K - b),
    which converges to the optimal multipliers as K grows.
    """
    cfg = cfg or SolverConfig()
    ks = [float(K) for K in K_schedule]
    if not ks or any(K <= 0 for K in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("K_schedule must be strictly increasing and positive")
    out = []
    x_start = None
    for K in ks:
        inst = proj.penalized(K)
        rep = solve_fgm(inst, cfg, x0=x_start)
        y_est = K * (proj.A.matvec(rep.x_final) - proj.b)
        out.append(PenaltyStep(K, rep.x_final, y_est))
        x_start = rep.x_final
    return out


@dataclass
class TuneResult:
    lambda_bar: float
    x: np.ndarray
    at_endpoint: bool
    bracket_widths: list
    evals: int


def tune_lambda(proj, epsilon_slater, interval, cfg=None, width_tol=1e-3):
    """Golden-section search for the load-fit multiplier.

    Maximizes the concave one-dimensional dual of the relaxed problem
    (load misfit allowed up to epsilon_slater^2) over the given interval;
    each evaluation solves the inner penalized regression with an accuracy
    slaved to the current bracket width.  Flags a maximizer pinned at an
    interval endpoint instead of failing.
    """
    cfg = cfg or SolverConfig()
    if epsilon_slater <= 0:
        raise ValueError("epsilon_slater must be positive")
    lo, hi = float(interval[0]), float(interval[1])
    if not (0 < lo < hi):
        raise ValueError("interval must satisfy 0 < lo < hi")
    if proj.reg.variant != RIDGE:
        raise ValueError("multiplier tuning is defined for the ridge penalty")
    eps2 = epsilon_slater * epsilon_slater
    invphi = (math.sqrt(5.0) - 1.0) / 2.0

    evals = 0

    def q(lb, width):
        nonlocal evals
        inner_eps = max(width * eps2 / (10.0 * lb), 1e-13)
        from dataclasses import replace
        icfg = replace(cfg, epsilon=inner_eps, relative_mode=False)
        inst = ProblemInstance(proj.A, proj.b,
                               type(proj.reg).ridge(1.0 / lb, proj.reg.x_g),
                               stats=proj._stats)
        rep = solve_fgm(inst, icfg)
        x = rep.x_final
        r = proj.A.matvec(x) - proj.b
        evals += 1
        d = x - proj.reg.x_g
        return float(d @ d) + 0.5 * lb * (float(r @ r) - eps2), x

    a, b = lo, hi
    widths = [b - a]
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    qc, _ = q(c, b - a)
    qd, _ = q(d, b - a)
    min_width = width_tol * (hi - lo)
    while b - a > min_width and evals < 200:
        if qc >= qd:
            b, d, qd = d, c, qc
            c = b - invphi * (b - a)
            qc, _ = q(c, b - a)
        else:
            a, c, qc = c, d, qd
            d = a + invphi * (b - a)
            qd, _ = q(d, b - a)
        widths.append(b - a)
    lam_bar = 0.5 * (a + b)
    _, x = q(lam_bar, min_width)
    at_endpoint = (a - lo) <= min_width or (hi - b) <= min_width
    return TuneResult(lambda_bar=lam_bar, x=x, at_endpoint=at_endpoint,
                      bracket_widths=widths, evals=evals)
