import numpy as np
import pytest
import scipy.optimize

from conftest import interior_ridge_instance, random_pattern, simplex_grid_max
from tomosolve.model import (
    ProblemInstance,
    ProjectionInstance,
    Regularizer,
    conjugate_g,
    conjugate_sigma,
)
from tomosolve.routes import RouteMatrix


class TestRegularizer:
    def test_validation(self):
        with pytest.raises(ValueError):
            Regularizer.ridge(-1.0, np.ones(2))
        with pytest.raises(ValueError):
            Regularizer.ridge(1.0, np.array([1.0, -0.5]))
        with pytest.raises(ValueError):
            Regularizer.entropy(1.0, np.array([1.0, 0.0]), 2.0)
        with pytest.raises(ValueError):
            Regularizer.entropy(1.0, np.ones(2), 0.0)

    def test_entropy_zero_log_zero(self):
        reg = Regularizer.entropy(1.0, np.ones(3), 3.0)
        x = np.array([0.0, 1.5, 1.5])
        assert np.isfinite(reg.value(x))

    def test_feasible_starts(self):
        ridge = Regularizer.ridge(1.0, np.array([1.0, 2.0]))
        assert np.array_equal(ridge.feasible_start(2), [1.0, 2.0])
        ent = Regularizer.entropy(1.0, np.array([1.0, 3.0]), 8.0)
        assert ent.feasible_start(2).sum() == pytest.approx(8.0)
        assert np.array_equal(Regularizer.lasso(0.5).feasible_start(3), np.zeros(3))


class TestObjective:
    def test_ridge_zero_at_consistent_prior(self, rng):
        A, _ = random_pattern(6, 9, 0.3, rng)
        x_g = rng.uniform(0.5, 2.0, 9)
        b = A.matvec(x_g)
        inst = ProblemInstance(A, b, Regularizer.ridge(0.8, x_g))
        assert inst.objective(x_g) == pytest.approx(0.0, abs=1e-12)

    def test_entropy_prior_on_simplex(self, rng):
        A, _ = random_pattern(4, 6, 0.4, rng)
        x_g = rng.uniform(0.5, 2.0, 6)
        R = float(x_g.sum())
        b = rng.uniform(1.0, 2.0, 4)
        inst = ProblemInstance(A, b, Regularizer.entropy(1.3, x_g, R))
        r = A.matvec(x_g) - b
        assert inst.objective(x_g) == pytest.approx(0.5 * r @ r, rel=1e-12)

    def test_lasso_at_zero(self, rng):
        A, _ = random_pattern(5, 7, 0.3, rng)
        b = rng.uniform(1.0, 2.0, 5)
        inst = ProblemInstance(A, b, Regularizer.lasso(0.3))
        assert inst.objective(np.zeros(7)) == pytest.approx(0.5 * b @ b)

    def test_negative_point_rejected(self, rng):
        A, _ = random_pattern(3, 4, 0.5, rng)
        inst = ProblemInstance(A, np.ones(3), Regularizer.lasso(0.1))
        with pytest.raises(ValueError, match="negative"):
            inst.objective(np.array([1.0, -0.1, 0.0, 0.0]))


def central_fd(fun, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


class TestSmoothGrad:
    def test_zero_residual(self, rng):
        A, _ = random_pattern(6, 9, 0.3, rng)
        x = rng.uniform(0.5, 2.0, 9)
        inst = ProblemInstance(A, A.matvec(x), Regularizer.lasso(0.0))
        np.testing.assert_allclose(inst.smooth_grad(x), 0.0, atol=1e-12)

    def test_identity_quadratic(self):
        A = RouteMatrix.identity(4)
        inst = ProblemInstance(A, np.zeros(4), Regularizer.lasso(0.0))
        x = np.array([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(inst.smooth_grad(x), x)

    @pytest.mark.parametrize("seed", range(4))
    def test_finite_difference_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 50))
        m = int(rng.integers(3, 30))
        A, _ = random_pattern(m, n, 0.3, rng)
        b = rng.uniform(0.5, 3.0, m)
        inst = ProblemInstance(A, b, Regularizer.lasso(0.0))
        x = rng.uniform(0.5, 2.0, n)
        scale = float(np.abs(x).max())
        g_fd = central_fd(inst.smooth_value, x, 1e-6 * scale)
        g = inst.smooth_grad(x)
        np.testing.assert_allclose(g, g_fd, rtol=1e-5, atol=1e-8)


class TestCompositeProx:
    def test_ridge_fixed_point(self, rng):
        A, _ = random_pattern(4, 5, 0.4, rng)
        inst = ProblemInstance(A, np.ones(4), Regularizer.ridge(0.0, np.ones(5)))
        x = rng.uniform(0.1, 2.0, 5)
        np.testing.assert_allclose(inst.composite_prox(x, np.zeros(5), 2.0), x)

    def test_lasso_soft_threshold_arithmetic(self):
        A = RouteMatrix.identity(1)
        inst = ProblemInstance(A, np.zeros(1), Regularizer.lasso(0.5))
        z = inst.composite_prox(np.array([1.0]), np.array([0.0]), 1.0)
        assert z[0] == pytest.approx(0.5)

    def test_rejects_bad_curvature(self, rng):
        A, _ = random_pattern(3, 4, 0.5, rng)
        inst = ProblemInstance(A, np.ones(3), Regularizer.lasso(0.1))
        with pytest.raises(ValueError):
            inst.composite_prox(np.ones(4), np.ones(4), 0.0)

    def test_entropy_matches_grid_oracle(self, rng):
        n, R, lam, L = 3, 2.5, 0.8, 1.7
        A, _ = random_pattern(2, n, 0.5, rng)
        x_g = rng.uniform(0.4, 1.5, n)
        inst = ProblemInstance(A, np.ones(2), Regularizer.entropy(lam, x_g, R))
        x = rng.uniform(0.3, 1.0, n)
        x *= R / x.sum()
        grad = rng.standard_normal(n)
        z = inst.composite_prox(x, grad, L)
        assert z.min() >= 0 and z.sum() == pytest.approx(R, rel=1e-12)

        def neg_model(p):
            p = np.maximum(p, 1e-12)
            kl_x = np.sum(p * np.log(p / x))
            kl_g = np.sum(p * np.log(p / x_g))
            return -(grad @ p + L * kl_x + lam * kl_g)

        best_v, _ = simplex_grid_max(neg_model, n, R)
        assert -neg_model(z) <= -best_v + 1e-4

    def test_prox_beats_random_feasible_perturbations(self, rng):
        for variant in ("ridge", "lasso", "entropy"):
            n = 6
            A, _ = random_pattern(4, n, 0.4, rng)
            x_g = rng.uniform(0.5, 2.0, n)
            R = float(x_g.sum())
            if variant == "ridge":
                reg = Regularizer.ridge(0.6, x_g)
            elif variant == "lasso":
                reg = Regularizer.lasso(0.4)
            else:
                reg = Regularizer.entropy(0.6, x_g, R)
            inst = ProblemInstance(A, np.ones(4), reg)
            x = reg.feasible_start(n) + 0.1
            if variant == "entropy":
                x *= R / x.sum()
            grad = rng.standard_normal(n)
            L = 2.3
            z = inst.composite_prox(x, grad, L)

            def model(p):
                if variant == "entropy":
                    div = np.sum(p[p > 0] * np.log(p[p > 0] / x[p > 0]))
                else:
                    div = 0.5 * np.sum((p - x) ** 2)
                return grad @ p + L * div + reg.value(p)

            base = model(z)
            for _ in range(1000):
                p = np.abs(z + rng.standard_normal(n) * 0.2)
                if variant == "entropy":
                    p = p * (R / p.sum())
                assert model(p) >= base - 1e-10


class TestConjugateSigma:
    def test_at_zero(self):
        v, d = conjugate_sigma(2.0, 0.0)
        assert v == 0.0 and d == 2.0

    def test_brute_force_grid(self):
        b_k, y = 2.0, 1.0
        zs = np.linspace(-50, 50, 2_000_001)
        brute = np.max(zs * y - 0.5 * (zs - b_k) ** 2)
        v, _ = conjugate_sigma(b_k, y)
        assert v == pytest.approx(2.5, abs=1e-9)
        assert v == pytest.approx(brute, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_fenchel_young(self, seed):
        rng = np.random.default_rng(seed)
        b_k = float(rng.uniform(-2, 2))
        y = float(rng.uniform(-2, 2))
        v, d = conjugate_sigma(b_k, y)
        for z in rng.uniform(-5, 5, 50):
            assert 0.5 * (z - b_k) ** 2 + v >= z * y - 1e-12
        z_star = d
        assert 0.5 * (z_star - b_k) ** 2 + v == pytest.approx(z_star * y, abs=1e-10)


class TestConjugateG:
    def test_ridge_zero_slope(self):
        x_g = np.array([1.0, 2.0, 0.5])
        reg = Regularizer.ridge(1.0, x_g)
        v, xbar = conjugate_g(reg, np.zeros(3))
        assert v == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(xbar, x_g)

    def test_entropy_zero_slope(self):
        x_g = np.array([1.0, 3.0])
        reg = Regularizer.entropy(1.0, x_g, 2.0)
        _, xbar = conjugate_g(reg, np.zeros(2))
        np.testing.assert_allclose(xbar, 2.0 * x_g / x_g.sum())

    def test_lasso_rejected(self):
        with pytest.raises(ValueError):
            conjugate_g(Regularizer.lasso(1.0), np.zeros(2))

    @pytest.mark.parametrize("seed", range(4))
    def test_ridge_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        lam = float(rng.uniform(0.4, 1.5))
        x_g = rng.uniform(0.2, 2.0, n)
        u = rng.standard_normal(n)
        reg = Regularizer.ridge(lam, x_g)
        v, xbar = conjugate_g(reg, u)
        # separable: per-coordinate grid over x_k >= 0
        brute = 0.0
        for k in range(n):
            xs = np.linspace(0, 10, 400_001)
            brute += np.max(u[k] * xs - lam * (xs - x_g[k]) ** 2)
        assert v == pytest.approx(brute, abs=1e-4)
        assert xbar.min() >= 0

    @pytest.mark.parametrize("seed", range(4))
    def test_entropy_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        lam = float(rng.uniform(0.5, 1.5))
        R = float(rng.uniform(1.0, 4.0))
        x_g = rng.uniform(0.3, 2.0, n)
        u = rng.standard_normal(n)
        reg = Regularizer.entropy(lam, x_g, R)
        v, xbar = conjugate_g(reg, u)

        def val(p):
            pos = p > 0
            return u @ p - lam * np.sum(p[pos] * np.log(p[pos] / x_g[pos]))

        brute, _ = simplex_grid_max(val, n, R)
        assert v == pytest.approx(brute, abs=1e-4)
        assert xbar.sum() == pytest.approx(R, rel=1e-10)
        # Fenchel-Young with equality at the maximizer
        assert val(xbar) == pytest.approx(v, abs=1e-10)


class TestGapCertificate:
    def test_zero_at_optimum(self, rng):
        inst, dense, x_star, f_star = interior_ridge_instance(rng)
        mu = inst.strong_convexity()
        assert inst.gap_certificate(x_star, mu) <= 1e-10

    def test_1d_interior_formula(self):
        A = RouteMatrix.identity(1)
        # gradient at x0 = 2 is x0 - b = 0.5; with mu = 1 the inner maximizer
        # z = x0 - g/mu stays positive, so the value is g^2/(2 mu)
        inst = ProblemInstance(A, np.array([1.5]), Regularizer.lasso(0.0))
        val = inst.gap_certificate(np.array([2.0]), mu=1.0)
        assert val == pytest.approx(0.5 ** 2 / 2.0)

    def test_rejects_nonpositive_mu(self, rng):
        inst, *_ = interior_ridge_instance(rng)
        with pytest.raises(ValueError):
            inst.gap_certificate(inst.feasible_start(), 0.0)

    def test_entropy_certificate_vanishes_at_constrained_optimum(self, rng):
        import scipy.optimize
        n, m = 5, 3
        A, dense = random_pattern(m, n, 0.5, rng)
        x_g = rng.uniform(0.5, 2.0, n)
        R = float(x_g.sum())
        b = rng.uniform(1.0, 3.0, m)
        lam = 0.9
        inst = ProblemInstance(A, b, Regularizer.entropy(lam, x_g, R))

        def fun(p):
            pos = np.maximum(p, 1e-300)
            return (0.5 * np.sum((dense @ p - b) ** 2)
                    + lam * np.sum(pos * np.log(pos / x_g)))

        res = scipy.optimize.minimize(
            fun, inst.feasible_start(), method="SLSQP",
            bounds=[(1e-12, None)] * n,
            constraints=[{"type": "eq", "fun": lambda p: p.sum() - R}],
            options={"maxiter": 2000, "ftol": 1e-16})
        mu = inst.strong_convexity()
        x_opt = res.x * (R / res.x.sum())
        cert = inst.gap_certificate(x_opt, mu)
        assert 0 <= cert <= 1e-6
        # and it still upper-bounds the gap at perturbed feasible points
        for _ in range(10):
            p = np.abs(x_opt + rng.standard_normal(n) * 0.1)
            p *= R / p.sum()
            gap = fun(p) - res.fun
            assert inst.gap_certificate(p, mu) >= gap - 1e-8

    def test_entropy_certificate_finite_at_boundary_points(self, rng):
        # an iterate coordinate that underflowed to exact zero must not
        # poison the certificate with NaN
        A, _ = random_pattern(3, 4, 0.5, rng)
        x_g = rng.uniform(0.5, 2.0, 4)
        R = float(x_g.sum())
        inst = ProblemInstance(A, np.ones(3), Regularizer.entropy(0.8, x_g, R))
        x = np.array([0.0, 0.4, 0.3, 0.3]) * R
        mu = inst.strong_convexity()
        cert = inst.gap_certificate(x, mu)
        assert np.isfinite(cert)
        assert cert >= 0

    @pytest.mark.parametrize("seed", range(8))
    def test_upper_bounds_gap_vs_oracle(self, seed):
        rng = np.random.default_rng(seed)
        inst, dense, x_star, f_star = interior_ridge_instance(rng)
        mu = inst.strong_convexity()
        for _ in range(10):
            x = np.abs(x_star + rng.standard_normal(x_star.size) * 0.3)
            cert = inst.gap_certificate(x, mu)
            gap = inst.objective(x) - f_star
            assert cert >= gap - 1e-8


class TestDualOracle:
    def test_ridge_zero_dual_point(self, rng):
        A, _ = random_pattern(5, 8, 0.3, rng)
        x_g = rng.uniform(0.5, 2.0, 8)
        b = A.matvec(x_g)
        proj = ProjectionInstance(A, b, Regularizer.ridge(1.0, x_g))
        phi, grad, x = proj.dual_oracle(np.zeros(5))
        np.testing.assert_allclose(x, x_g)
        assert phi == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_entropy_zero_dual_point(self, rng):
        A, _ = random_pattern(4, 6, 0.4, rng)
        x_g = rng.uniform(0.5, 2.0, 6)
        R = 5.0
        proj = ProjectionInstance(A, np.ones(4), Regularizer.entropy(1.0, x_g, R))
        _, _, x = proj.dual_oracle(np.zeros(4))
        np.testing.assert_allclose(x, R * x_g / x_g.sum())

    @pytest.mark.parametrize("variant", ["ridge", "entropy"])
    def test_inner_minimization_oracle(self, variant, rng):
        n, m = 5, 3
        A, dense = random_pattern(m, n, 0.5, rng)
        x_g = rng.uniform(0.5, 2.0, n)
        b = rng.uniform(1.0, 3.0, m)
        R = float(x_g.sum())
        if variant == "ridge":
            reg = Regularizer.ridge(1.0, x_g)
        else:
            reg = Regularizer.entropy(1.0, x_g, R)
        proj = ProjectionInstance(A, b, reg)
        y = rng.standard_normal(m)
        phi, grad, x_y = proj.dual_oracle(y)

        def lagr(p):
            return reg.value(np.maximum(p, 0)) + y @ (dense @ p - b)

        cons = [{"type": "eq", "fun": lambda p: p.sum() - R}] if variant == "entropy" else []
        res = scipy.optimize.minimize(
            lagr, np.maximum(x_y, 1e-6), method="SLSQP",
            bounds=[(0, None)] * n, constraints=cons,
            options={"maxiter": 500, "ftol": 1e-14})
        assert phi <= lagr(res.x) + 1e-7
        assert phi == pytest.approx(lagr(x_y), rel=1e-12)

        # dual gradient matches central differences of phi
        h = 1e-6
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            fd = (proj.dual_oracle(y + e)[0] - proj.dual_oracle(y - e)[0]) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestDualFunctionShape:
    @pytest.mark.parametrize("variant", ["ridge", "entropy"])
    def test_concavity_along_segments(self, variant, rng):
        A, _ = random_pattern(4, 7, 0.4, rng)
        x_g = rng.uniform(0.5, 2.0, 7)
        reg = (Regularizer.ridge(1.0, x_g) if variant == "ridge"
               else Regularizer.entropy(1.0, x_g, float(x_g.sum())))
        proj = ProjectionInstance(A, rng.uniform(1, 3, 4), reg)
        for _ in range(20):
            y1 = rng.standard_normal(4)
            y2 = rng.standard_normal(4)
            mid = proj.dual_oracle(0.5 * (y1 + y2))[0]
            avg = 0.5 * (proj.dual_oracle(y1)[0] + proj.dual_oracle(y2)[0])
            assert mid >= avg - 1e-10

    @pytest.mark.parametrize("variant", ["ridge", "entropy"])
    def test_gradient_lipschitz_bound(self, variant, rng):
        A, dense = random_pattern(5, 8, 0.4, rng)
        x_g = rng.uniform(0.5, 2.0, 8)
        R = float(x_g.sum())
        reg = (Regularizer.ridge(1.0, x_g) if variant == "ridge"
               else Regularizer.entropy(1.0, x_g, R))
        proj = ProjectionInstance(A, rng.uniform(1, 3, 5), reg)
        sigma = np.linalg.eigvalsh(dense.T @ dense)[-1]
        mu_g = 2.0 if variant == "ridge" else 1.0 / R
        L = sigma / mu_g
        for _ in range(30):
            y1 = rng.standard_normal(5)
            y2 = y1 + rng.standard_normal(5) * 0.1
            g1 = proj.dual_oracle(y1)[1]
            g2 = proj.dual_oracle(y2)[1]
            assert np.linalg.norm(g1 - g2) <= L * np.linalg.norm(y1 - y2) * (1 + 1e-9)

    def test_weak_duality(self, rng):
        n, m = 6, 3
        A, dense = random_pattern(m, n, 0.5, rng)
        x_feas = rng.uniform(0.5, 2.0, n)
        b = A.matvec(x_feas)
        x_g = rng.uniform(0.5, 2.0, n)
        proj = ProjectionInstance(A, b, Regularizer.ridge(1.0, x_g))
        g_feas = proj.g(x_feas)
        for _ in range(50):
            y = rng.standard_normal(m) * 3
            assert proj.dual_oracle(y)[0] <= g_feas + 1e-10


class TestProjectionValidation:
    def test_lasso_rejected(self):
        A = RouteMatrix.identity(2)
        with pytest.raises(ValueError):
            ProjectionInstance(A, np.ones(2), Regularizer.lasso(1.0))

    def test_lam_must_be_one(self):
        A = RouteMatrix.identity(2)
        with pytest.raises(ValueError):
            ProjectionInstance(A, np.ones(2), Regularizer.ridge(0.5, np.ones(2)))
