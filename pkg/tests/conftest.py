"""Shared factories: random patterns and oracle-solvable instances."""

import numpy as np
import pytest

from tomosolve.model import ProblemInstance, Regularizer
from tomosolve.routes import RouteMatrix


def random_pattern(m, n, density, rng):
    dense = (rng.random((m, n)) < density).astype(float)
    if dense.sum() == 0:
        dense[rng.integers(0, m), rng.integers(0, n)] = 1.0
    return RouteMatrix.from_dense(dense), dense


def dense_ridge_optimum(dense, b, lam, x_g, mu=0.0, center=None):
    """Unconstrained minimizer of the ridge objective by direct solve."""
    n = dense.shape[1]
    M = dense.T @ dense + (2.0 * lam + mu) * np.eye(n)
    rhs = dense.T @ b + 2.0 * lam * x_g
    if mu:
        rhs = rhs + mu * center
    return np.linalg.solve(M, rhs)


def ridge_objective(dense, b, lam, x_g, x, mu=0.0, center=None):
    val = 0.5 * np.sum((dense @ x - b) ** 2) + lam * np.sum((x - x_g) ** 2)
    if mu:
        val += 0.5 * mu * np.sum((x - center) ** 2)
    return float(val)


def interior_ridge_instance(rng, n=12, m=8, density=0.3, lam=None):
    """Random consistent ridge instance whose unconstrained optimum is
    strictly positive, so the direct solve is the true constrained optimum."""
    lam = lam if lam is not None else float(rng.uniform(0.2, 1.5))
    for _ in range(50):
        A, dense = random_pattern(m, n, density, rng)
        x_hat = rng.uniform(0.5, 2.0, n)
        b = A.matvec(x_hat)
        x_g = x_hat * rng.uniform(0.8, 1.25, n)
        x_star = dense_ridge_optimum(dense, b, lam, x_g)
        if x_star.min() > 1e-3:
            inst = ProblemInstance(A, b, Regularizer.ridge(lam, x_g))
            f_star = ridge_objective(dense, b, lam, x_g, x_star)
            return inst, dense, x_star, f_star
    raise AssertionError("no interior instance found")


def simplex_grid_max(fun, n, R, levels=60, zoom=2):
    """Brute-force maximum of ``fun`` over the mass-R simplex in n <= 4 dims.

    Coarse composition grid followed by a local refinement pass around the
    incumbent; returns (value, point).
    """
    def grid_points(center, half_width, k):
        if n == 1:
            yield np.array([R])
            return
        lo = np.maximum(center - half_width, 0.0)
        hi = np.minimum(center + half_width, R)
        axes = [np.linspace(lo[i], hi[i], k) for i in range(n - 1)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([mm.ravel() for mm in mesh], axis=1)
        last = R - flat.sum(axis=1)
        ok = last >= 0
        pts = np.column_stack([flat[ok], last[ok]])
        yield from pts

    center = np.full(n, R / n)
    width = np.full(n, float(R))
    best_v, best_p = -np.inf, None
    for _ in range(zoom + 1):
        for p in grid_points(center, width, levels):
            v = fun(p)
            if v > best_v:
                best_v, best_p = v, p
        center = best_p.copy()
        width = width * (3.0 / levels)
    return best_v, best_p


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
