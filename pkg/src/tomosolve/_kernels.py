"""Compiled per-coordinate inner loops for the randomized solvers.

Each kernel advances its solver by one batch of coordinate steps over the
raw index arrays of a RouteMatrix, so a step touches only the rows of one
column (or the columns of one row) and the flop counters grow with the
structural nonzeros actually visited.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _accel_cd_chunk(col_ptr, col_rows, lk, bcol, xg, lam, lasso, mu, center,
                    coords, z, u, r_z, r_u, theta, n_eff):
    """Accelerated coordinate steps in the two-sequence (z, u) form.

    The query point is y = theta^2*u + z; its residual is carried as the
    pair (r_z, r_u) = (A z, A u) so one step costs O(column nnz).  Returns
    (next theta, theta used by the last step, flops).
    """
    th = theta
    th_used = theta
    flops = 0
    for s in range(coords.shape[0]):
        i = coords[s]
        lo = col_ptr[i]
        hi = col_ptr[i + 1]
        du_dot = 0.0
        dz_dot = 0.0
        for p in range(lo, hi):
            row = col_rows[p]
            du_dot += r_u[row]
            dz_dot += r_z[row]
        g = th * th * du_dot + dz_dot - bcol[i]
        if mu > 0.0:
            yi = th * th * u[i] + z[i]
            g += mu * (yi - center[i])
        beta = n_eff * th * lk[i]
        if lasso:
            t = -(g + lam) / beta
        else:
            t = (2.0 * lam * (xg[i] - z[i]) - g) / (beta + 2.0 * lam)
        if z[i] + t < 0.0:
            t = -z[i]
        z[i] += t
        dui = -(1.0 - n_eff * th) / (th * th) * t
        u[i] += dui
        for p in range(lo, hi):
            row = col_rows[p]
            r_z[row] += t
            r_u[row] += dui
        flops += 6 * (hi - lo)
        th_used = th
        th = 0.5 * (math.sqrt(th * th * th * th + 4.0 * th * th) - th * th)
    return th, th_used, flops


@njit(cache=True)
def _parabola_cd_chunk(col_ptr, col_rows, colsq, xg, lam, lasso, mu, center,
                       harr, coords, x, r, rho):
    """Derivative-free coordinate steps from three function values.

    rho caches ||r||^2 so the three values of the smooth part along a
    coordinate line cost O(column nnz); the fitted parabola is combined
    with the exact one-dimensional penalty and the step jumps to the
    constrained minimizer.  Returns (updated rho, flops).
    """
    flops = 0
    for s in range(coords.shape[0]):
        i = coords[s]
        lo = col_ptr[i]
        hi = col_ptr[i + 1]
        dot = 0.0
        for p in range(lo, hi):
            dot += r[col_rows[p]]
        h = harr[i]
        xi = x[i]
        csq = colsq[i]
        if mu > 0.0:
            d0 = xi - center[i]
            v0 = 0.5 * rho + 0.5 * mu * d0 * d0
            vp = 0.5 * (rho + 2.0 * h * dot + h * h * csq) \
                + 0.5 * mu * (d0 + h) * (d0 + h)
            vm = 0.5 * (rho - 2.0 * h * dot + h * h * csq) \
                + 0.5 * mu * (d0 - h) * (d0 - h)
        else:
            v0 = 0.5 * rho
            vp = 0.5 * (rho + 2.0 * h * dot + h * h * csq)
            vm = 0.5 * (rho - 2.0 * h * dot + h * h * csq)
        slope = (vp - vm) / (2.0 * h)
        curv = (vp + vm - 2.0 * v0) / (h * h)
        if lasso:
            if curv <= 0.0:
                continue
            t = -(slope + lam) / curv
        else:
            denom = curv + 2.0 * lam
            if denom <= 0.0:
                continue
            t = (2.0 * lam * (xg[i] - xi) - slope) / denom
        if xi + t < 0.0:
            t = -xi
        if t != 0.0:
            x[i] = xi + t
            for p in range(lo, hi):
                r[col_rows[p]] += t
            rho += 2.0 * t * dot + t * t * csq
        flops += 4 * (hi - lo)
    return rho, flops


@njit(cache=True)
def _link_ascent_chunk(row_ptr, row_cols, b, xg, lam, coords, y, u):
    """Exact per-link minimization of the conjugate objective.

    The one-dimensional section along a link multiplier is piecewise
    quadratic with breakpoints where primal demands clamp at zero; the
    scan below walks the sorted breakpoints and solves the stationarity
    equation on the segment containing the minimizer.  u carries -A^T y.
    Returns flops.
    """
    flops = 0
    inv2lam = 1.0 / (2.0 * lam)
    for s in range(coords.shape[0]):
        k = coords[s]
        lo = row_ptr[k]
        hi = row_ptr[k + 1]
        rn = hi - lo
        yk = y[k]
        bk = b[k]
        if rn == 0:
            y[k] = -bk
            continue
        tb = np.empty(rn)
        s1 = 0.0
        s2 = 0.0
        for p in range(lo, hi):
            j = row_cols[p]
            tb[p - lo] = u[j] + 2.0 * lam * xg[j]
            s1 += xg[j]
            s2 += u[j]
        order = np.argsort(tb)
        cnt = rn
        tstar = 0.0
        for idx in range(rn + 1):
            tcand = (s1 + s2 * inv2lam - yk - bk) / (1.0 + cnt * inv2lam)
            if idx == rn or tcand <= tb[order[idx]]:
                tstar = tcand
                break
            j = row_cols[lo + order[idx]]
            s1 -= xg[j]
            s2 -= u[j]
            cnt -= 1
        y[k] = yk + tstar
        for p in range(lo, hi):
            u[row_cols[p]] -= tstar
        flops += 12 * rn
    return flops
