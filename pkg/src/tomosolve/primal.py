"""Demand-space solvers for the penalized regression problem.

* ``solve_fgm``      accelerated proximal gradient (similar-triangles form),
                     Euclidean prox for ridge/lasso and entropic prox on the
                     simplex, so one scheme covers all three penalties;
* ``solve_rcd``      accelerated randomized coordinate descent with
                     per-coordinate curvatures (ridge/lasso);
* ``solve_powell3``  derivative-free random coordinate search that fits the
                     coordinate parabola from three function values;
* ``solve_cg``       conjugate gradients on the regularized normal
                     equations, the high-precision unconstrained baseline;
* ``solve_with_restarts``  radius-doubling driver: adds Tikhonov
                     regularization sized from a guessed distance to the
                     solution, validates the guess with a gradient
                     certificate, and doubles the radius until it holds.
"""

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import _accel_cd_chunk, _parabola_cd_chunk
from .model import ENTROPY, LASSO, RIDGE
from .reports import SolveReport, TraceRecorder


@dataclass
class SolverConfig:
    """Accuracy targets, budgets and tuning knobs shared by all solvers.

    ``epsilon`` is the target objective gap (the squared-accuracy sense
    used throughout); with ``relative_mode`` it is multiplied by the
    initial gap estimate, so 0.01 asks for 1% relative accuracy.
    """

    epsilon: float = 1e-9
    max_iters: int = 200_000
    seed: int = 0
    l_source: str = "power_estimate"  # trace_bound | power_estimate | backtracking
    r2_init: float = 1.0              # initial guess for half squared start-to-solution distance
    relative_mode: bool = False
    r_tilde_init: float = 1.0         # initial dual-radius guess (projection solver)
    trace_stride: int = None          # None: dense below 1e4 iterations, then every 100th
    cert_every: int = 20              # iterations between certificate stopping checks
    restart_scale: float = 2.0        # multiplier on prescribed per-round budgets
    max_restarts: int = 60
    powell_h: float = 1.0
    powell_h_adaptive: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.r2_init <= 0:
            raise ValueError("r2_init must be positive")
        if self.r_tilde_init <= 0:
            raise ValueError("r_tilde_init must be positive")


class NumericalFailure(RuntimeError):
    """Objective became non-finite; carries the offending iterate."""

    def __init__(self, message, x=None, iteration=None):
        super().__init__(message)
        self.x = x
        self.iteration = iteration


class RestartBudgetError(RuntimeError):
    """Radius-doubling budget exhausted; carries the full restart log."""

    def __init__(self, message, restarts):
        super().__init__(message)
        self.restarts = restarts


def _effective_epsilon(inst, cfg, x_start):
    if not cfg.relative_mode:
        return cfg.epsilon
    gap0 = inst.objective(x_start) - inst.lower_bound()
    return cfg.epsilon * max(gap0, 1e-30)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def solve_fgm(inst, cfg=None, x0=None):
    """Accelerated proximal gradient in the method-of-similar-triangles form.

    Keeps three sequences: a prox point z, a query point y and a solution
    estimate x, both combinations staying inside the feasible set, so the
    same loop drives the Euclidean and the entropic prox.  Stops when the
    gradient certificate (available whenever the objective is strongly
    convex) drops below the accuracy target, or on the iteration budget.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    nnz = inst.A.nnz
    x = inst.feasible_start() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    z = x.copy()
    entropy = inst.reg.variant == ENTROPY
    backtrack = cfg.l_source == "backtracking"
    L = inst.smooth_lipschitz(cfg.l_source)
    L_floor = 1e-8 * L
    mu_sc = inst.strong_convexity()
    eps_eff = _effective_epsilon(inst, cfg, x)

    obj = TraceRecorder(cfg.trace_stride)
    cert_tr = TraceRecorder(cfg.trace_stride)
    flops = 0
    f = inst.objective(x)
    flops += 2 * nnz
    obj.add(0, f)
    f_best, x_best = f, x.copy()

    a_sum = 0.0
    accepted = 0
    k = 0
    certified = False
    while k < cfg.max_iters:
        while True:
            a = (k + 2) / (2.0 * L)
            a_next = a_sum + a
            y = (a_sum * x + a * z) / a_next
            gy = inst.smooth_grad(y)
            flops += 4 * nnz
            z_new = inst.composite_prox(z, gy, 1.0 / a)
            x_new = (a_sum * x + a * z_new) / a_next
            if not backtrack:
                break
            d = x_new - y
            fy = inst.smooth_value(y)
            fx = inst.smooth_value(x_new)
            flops += 4 * nnz
            if entropy:
                quad = 0.5 * (L / inst.reg.R) * float(np.abs(d).sum()) ** 2
            else:
                quad = 0.5 * L * float(d @ d)
            if fx <= fy + float(gy @ d) + quad + 1e-12 * max(1.0, abs(fy)):
                accepted += 1
                if accepted % 10 == 0:
                    L = max(L / 2.0, L_floor)
                break
            L *= 2.0
        z, x, a_sum = z_new, x_new, a_next
        k += 1
        if obj.want(k) or k == cfg.max_iters:
            f = inst.objective(x)
            flops += 2 * nnz
            if not np.isfinite(f):
                raise NumericalFailure("objective overflowed", x=x, iteration=k)
            obj.add(k, f)
            if f < f_best:
                f_best, x_best = f, x.copy()
        if mu_sc > 0 and (k % cfg.cert_every == 0 or k == cfg.max_iters):
            cert = inst.gap_certificate(x, mu_sc)
            flops += 4 * nnz
            cert_tr.add(k, cert)
            if cert <= eps_eff:
                certified = True
                break
    if certified:
        x_final = x
    else:
        x_final = x_best
    return SolveReport(
        x_final=x_final,
        objective_trace=obj.values,
        certificate_trace=cert_tr.values,
        iters=k,
        flops=flops,
        restarts=[],
        wall_time_s=time.perf_counter() - t0,
        trace_iters=obj.iters,
        extras={"cert_iters": cert_tr.iters},
    )


def _settle_empty_columns(inst, x, empty):
    """Closed-form optimum for demands crossing no link (flat data term)."""
    reg = inst.reg
    mu = inst.tikhonov_mu
    c = inst.tikhonov_center[empty] if mu else 0.0
    if reg.variant == RIDGE:
        lam = reg.lam
        if 2.0 * lam + mu > 0:
            x[empty] = np.maximum(0.0, (2.0 * lam * reg.x_g[empty] + mu * c) / (2.0 * lam + mu))
    else:  # lasso
        if mu > 0:
            x[empty] = np.maximum(0.0, c - reg.lam / mu)
        elif reg.lam > 0:
            x[empty] = 0.0


def solve_rcd(inst, cfg=None, x0=None, chunk_size=None):
    """Accelerated randomized coordinate descent (ridge/lasso penalties).

    The accelerated iterate is carried in the two-sequence form
    x = theta^2*u + z so a step touches only one column of the route
    matrix; per-coordinate curvatures are the column nnz counts.  Demands
    with empty columns are settled in closed form and never sampled.
    """
    cfg = cfg or SolverConfig()
    if inst.reg.variant == ENTROPY:
        raise ValueError("coordinate solver has no entropy-penalty variant")
    t0 = time.perf_counter()
    nnz = inst.A.nnz
    x = inst.feasible_start() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    colsq = inst.A.col_nnz
    active = np.flatnonzero(colsq > 0)
    empty = colsq == 0
    if empty.any():
        _settle_empty_columns(inst, x, empty)

    obj = TraceRecorder(cfg.trace_stride)
    cert_tr = TraceRecorder(cfg.trace_stride)
    f = inst.objective(x)
    flops = 2 * nnz
    obj.add(0, f)
    f_best, x_best = f, x.copy()
    if active.size == 0:
        return SolveReport(x, obj.values, cert_tr.values, 0, flops, [],
                           time.perf_counter() - t0, trace_iters=obj.iters)

    lam = inst.reg.lam
    lasso = inst.reg.variant == LASSO
    mu = inst.tikhonov_mu
    center = inst.tikhonov_center if mu else np.zeros(0)
    xg = inst.reg.x_g if not lasso else np.zeros(0)
    lk = inst.coordinate_lipschitz()
    bcol = inst.A.rmatvec(inst.b)
    flops += 2 * nnz
    mu_sc = inst.strong_convexity()
    eps_eff = _effective_epsilon(inst, cfg, x)

    n_eff = active.size
    z = x.copy()
    u = np.zeros(inst.n)
    r_z = inst.A.matvec(z)
    r_u = np.zeros(inst.m)
    flops += 2 * nnz
    theta = 1.0 / n_eff
    th_used = theta
    chunk = chunk_size or n_eff
    rng = _rng(cfg.seed)
    steps = 0
    certified = False
    x_cur = x
    while steps < cfg.max_iters:
        take = min(chunk, cfg.max_iters - steps)
        coords = active[rng.integers(0, n_eff, size=take)]
        theta, th_used, fl = _accel_cd_chunk(
            inst.A.col_ptr, inst.A.col_rows, lk, bcol, xg, lam, lasso, mu,
            center, coords, z, u, r_z, r_u, theta, float(n_eff))
        flops += fl
        steps += take
        x_cur = np.maximum(th_used * th_used * u + z, 0.0)
        if empty.any():
            x_cur[empty] = x[empty]
        if obj.want(steps) or steps >= cfg.max_iters:
            f = inst.objective(x_cur)
            flops += 2 * nnz
            if not np.isfinite(f):
                raise NumericalFailure("objective overflowed", x=x_cur, iteration=steps)
            obj.add(steps, f)
            if f < f_best:
                f_best, x_best = f, x_cur.copy()
        if mu_sc > 0:
            cert = inst.gap_certificate(x_cur, mu_sc)
            flops += 4 * nnz
            cert_tr.add(steps, cert)
            if cert <= eps_eff:
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
    )


def solve_powell3(inst, cfg=None, x0=None, chunk_size=None):
    """Derivative-free random coordinate search (ridge/lasso penalties).

    Each step evaluates the smooth part at x and x +- h*e_i via the cached
    residual (three values, O(column nnz)), fits the coordinate parabola
    exactly, adds the exact one-dimensional penalty and jumps to the
    constrained minimizer.  Coordinates with no curvature are skipped.
    """
    cfg = cfg or SolverConfig()
    if inst.reg.variant == ENTROPY:
        raise ValueError("three-point solver has no entropy-penalty variant")
    t0 = time.perf_counter()
    nnz = inst.A.nnz
    x = inst.feasible_start() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    colsq = inst.A.col_nnz.astype(np.float64)
    active = np.flatnonzero(colsq > 0)
    empty = colsq == 0
    if empty.any():
        _settle_empty_columns(inst, x, empty)

    obj = TraceRecorder(cfg.trace_stride)
    cert_tr = TraceRecorder(cfg.trace_stride)
    f = inst.objective(x)
    flops = 2 * nnz
    obj.add(0, f)
    f_best, x_best = f, x.copy()
    if active.size == 0:
        return SolveReport(x, obj.values, cert_tr.values, 0, flops, [],
                           time.perf_counter() - t0, trace_iters=obj.iters)

    lam = inst.reg.lam
    lasso = inst.reg.variant == LASSO
    mu = inst.tikhonov_mu
    center = inst.tikhonov_center if mu else np.zeros(0)
    xg = inst.reg.x_g if not lasso else np.zeros(0)
    if cfg.powell_h_adaptive and not lasso:
        harr = np.maximum(1.0, 0.01 * inst.reg.x_g)
    else:
        harr = np.full(inst.n, cfg.powell_h)
    mu_sc = inst.strong_convexity()
    eps_eff = _effective_epsilon(inst, cfg, x)

    r = inst.A.matvec(x) - inst.b
    rho = float(r @ r)
    flops += 2 * nnz
    n_eff = active.size
    chunk = chunk_size or n_eff
    rng = _rng(cfg.seed)
    steps = 0
    chunks_done = 0
    certified = False
    while steps < cfg.max_iters:
        take = min(chunk, cfg.max_iters - steps)
        coords = active[rng.integers(0, n_eff, size=take)]
        rho, fl = _parabola_cd_chunk(
            inst.A.col_ptr, inst.A.col_rows, colsq, xg, lam, lasso, mu,
            center, harr, coords, x, r, rho)
        flops += fl
        steps += take
        chunks_done += 1
        if chunks_done % 16 == 0:
            # refresh the cached residual against incremental drift
            r = inst.A.matvec(x) - inst.b
            rho = float(r @ r)
            flops += 2 * nnz
        if obj.want(steps) or steps >= cfg.max_iters:
            f = 0.5 * rho + inst.reg.value(x)
            if mu:
                d = x - center
                f += 0.5 * mu * float(d @ d)
            if not np.isfinite(f):
                raise NumericalFailure("objective overflowed", x=x, iteration=steps)
            obj.add(steps, f)
            if f < f_best:
                f_best, x_best = f, x.copy()
        if mu_sc > 0:
            cert = inst.gap_certificate(x, mu_sc)
            flops += 4 * nnz
            cert_tr.add(steps, cert)
            if cert <= eps_eff:
                certified = True
                break
    x_final = x if certified else x_best
    return SolveReport(
        x_final=x_final,
        objective_trace=obj.values,
        certificate_trace=cert_tr.values,
        iters=steps,
        flops=flops,
        restarts=[],
        wall_time_s=time.perf_counter() - t0,
        trace_iters=obj.iters,
    )


def solve_cg(inst, cfg=None, x0=None):
    """Conjugate gradients on the regularized normal equations (ridge).

    Solves (A^T A + (2*lam + mu) I) x = A^T b + 2*lam*x_g + mu*x0 without
    the nonnegativity constraint; when the unconstrained minimizer is
    nonnegative this is the high-precision baseline for the other solvers.
    A singular system (lam = 0) runs to the iteration budget and reports
    the final residual instead of failing.
    """
    cfg = cfg or SolverConfig()
    if inst.reg.variant != RIDGE:
        raise ValueError("normal-equations solver needs the ridge penalty")
    t0 = time.perf_counter()
    nnz = inst.A.nnz
    lam = inst.reg.lam
    mu = inst.tikhonov_mu
    shift = 2.0 * lam + mu

    def apply(v):
        return inst.A.rmatvec(inst.A.matvec(v)) + shift * v

    rhs = inst.A.rmatvec(inst.b) + 2.0 * lam * inst.reg.x_g
    if mu:
        rhs = rhs + mu * inst.tikhonov_center
    x = inst.feasible_start() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    r = rhs - apply(x)
    p = r.copy()
    rs = float(r @ r)
    flops = 6 * nnz

    obj = TraceRecorder(cfg.trace_stride)
    res_tr = TraceRecorder(cfg.trace_stride)
    obj.add(0, inst.objective(x, validate=False))
    res_tr.add(0, math.sqrt(rs))
    eps_eff = _effective_epsilon(inst, cfg, np.maximum(x, 0.0))
    # objective gap <= ||r||^2 / (2*shift) for a shift-strongly-convex quadratic
    rs_stop = 2.0 * shift * eps_eff if shift > 0 else 0.0

    k = 0
    while k < cfg.max_iters and rs > 0.0:
        ap = apply(p)
        flops += 4 * nnz
        pap = float(p @ ap)
        if pap <= 0.0:
            break
        alpha = rs / pap
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(r @ r)
        k += 1
        if obj.want(k):
            obj.add(k, inst.objective(x, validate=False))
            res_tr.add(k, math.sqrt(rs_new))
            flops += 2 * nnz
        if rs_stop > 0 and rs_new <= rs_stop:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return SolveReport(
        x_final=x,
        objective_trace=obj.values,
        certificate_trace=res_tr.values,
        iters=k,
        flops=flops,
        restarts=[],
        wall_time_s=time.perf_counter() - t0,
        trace_iters=obj.iters,
        extras={"final_residual": math.sqrt(rs)},
    )


_INNER_SOLVERS = {"fgm": solve_fgm, "rcd": solve_rcd, "powell3": solve_powell3}


def _round_budget(inner, inst, mu_tot, r2_sq, eps2, cfg):
    """Prescribed iteration count for one radius-validation round."""
    L = inst.smooth_lipschitz(cfg.l_source)
    logterm = math.log(max(math.e, L * r2_sq / eps2))
    n = inst.n
    if inner == "fgm":
        base = math.sqrt(L / mu_tot)
    elif inner == "rcd":
        total_lk = float(inst.coordinate_lipschitz().sum())
        base = math.sqrt(n * total_lk / mu_tot) + 4.0 * n
    else:  # powell3: no acceleration, linear rate in Sum(L_k)/mu
        total_lk = float(inst.coordinate_lipschitz().sum())
        base = total_lk / mu_tot + n
    return max(8, int(math.ceil(cfg.restart_scale * base * logterm)))


def solve_with_restarts(inst, epsilon, inner, cfg=None):
    """Radius-doubling driver around the strongly-convexified problem.

    Guesses half the squared distance from the start to the solution,
    adds the Tikhonov term mu/2*||x - x0||^2 with mu = eps^2 / (2*guess),
    runs the inner solver for its prescribed budget and accepts iff the
    gradient certificate is below eps^2; otherwise the radius doubles
    (the squared guess quadruples) and the round repeats, warm-started.
    """
    if inner not in _INNER_SOLVERS:
        raise ValueError("inner solver must be one of %s" % sorted(_INNER_SOLVERS))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    nnz = inst.A.nnz
    eps2 = epsilon * epsilon
    x0 = inst.feasible_start()
    lam1 = inst.strong_convexity()
    budget = cfg.max_restarts
    if lam1 > 0:
        cap = math.ceil(math.log2(max(2.0, 2.0 * lam1 * cfg.r2_init / eps2))) + 1
        budget = max(budget, cap)

    r2_sq = cfg.r2_init
    rounds = []
    round_points = []
    obj_trace, cert_trace, trace_iters = [], [], []
    flops = 0
    iters = 0
    x_start = x0
    for _ in range(budget):
        mu = eps2 / (2.0 * r2_sq)
        reg_inst = inst.with_tikhonov(mu, x0)
        mu_tot = reg_inst.strong_convexity()
        n_round = _round_budget(inner, reg_inst, mu_tot, r2_sq, eps2, cfg)
        icfg = replace(cfg, epsilon=eps2, max_iters=n_round, relative_mode=False)
        rep = _INNER_SOLVERS[inner](reg_inst, icfg, x0=x_start)
        cert = reg_inst.gap_certificate(rep.x_final, mu_tot)
        flops += rep.flops + 4 * nnz
        iters += rep.iters
        obj_trace.extend(rep.objective_trace)
        cert_trace.extend(rep.certificate_trace)
        trace_iters.extend(i + (trace_iters[-1] + 1 if trace_iters else 0)
                           for i in rep.trace_iters)
        rounds.append((math.sqrt(r2_sq), rep.iters, cert))
        round_points.append((rep.x_final, mu))
        if cert <= eps2:
            return SolveReport(
                x_final=rep.x_final,
                objective_trace=obj_trace,
                certificate_trace=cert_trace,
                iters=iters,
                flops=flops,
                restarts=rounds,
                wall_time_s=time.perf_counter() - t0,
                trace_iters=trace_iters,
                extras={"round_points": round_points},
            )
        x_start = rep.x_final
        r2_sq *= 4.0
    raise RestartBudgetError(
        "no radius guess validated within %d rounds" % budget, rounds)
