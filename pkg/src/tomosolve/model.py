"""Objectives, proximal steps, conjugates and optimality certificates.

The data term is always half the squared residual of the load equations,
``0.5 * ||Ax - b||^2``.  It is combined with one of three penalties:

* ``ridge``    lam * ||x - x_g||^2          over the nonnegative orthant,
* ``entropy``  lam * sum x_k log(x_k/x_g_k) over the mass-R simplex,
* ``lasso``    lam * sum x_k               over the nonnegative orthant.

An optional Tikhonov term ``mu/2 * ||x - x0||^2`` can be folded into the
smooth part; the radius-doubling driver uses it to make any instance
strongly convex without changing the penalty's proximal geometry.
"""

import math
from dataclasses import dataclass

import numpy as np

RIDGE = "ridge"
ENTROPY = "entropy"
LASSO = "lasso"
_VARIANTS = (RIDGE, ENTROPY, LASSO)


def _logsumexp(v):
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf: empty mass
        return m
    return m + math.log(np.sum(np.exp(v - m)))


@dataclass(frozen=True, eq=False)
class Regularizer:
    """One of the three penalty terms, with its feasible set implied.

    ``x_g`` is the prior demand vector (ridge and entropy), ``R`` the total
    simplex mass (entropy only).
    """

    variant: str
    lam: float
    x_g: np.ndarray = None
    R: float = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError("unknown regularizer %r" % self.variant)
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.variant == RIDGE:
            if self.x_g is None or np.any(self.x_g < 0):
                raise ValueError("ridge needs a nonnegative prior x_g")
        elif self.variant == ENTROPY:
            if self.x_g is None or np.any(self.x_g <= 0):
                raise ValueError("entropy needs a strictly positive prior x_g")
            if self.R is None or self.R <= 0:
                raise ValueError("entropy needs a positive total mass R")

    @classmethod
    def ridge(cls, lam, x_g):
        return cls(RIDGE, float(lam), np.asarray(x_g, dtype=np.float64))

    @classmethod
    def entropy(cls, lam, x_g, R):
        return cls(ENTROPY, float(lam), np.asarray(x_g, dtype=np.float64), float(R))

    @classmethod
    def lasso(cls, lam):
        return cls(LASSO, float(lam))

    def value(self, x):
        if self.variant == RIDGE:
            d = x - self.x_g
            return self.lam * float(d @ d)
        if self.variant == ENTROPY:
            pos = x > 0
            xs = x[pos]
            return self.lam * float(np.sum(xs * np.log(xs / self.x_g[pos])))
        return self.lam * float(np.sum(x))

    def grad(self, x):
        """Gradient on the (relative) interior of the feasible set.

        Entropy coordinates that underflowed to zero get the floored log
        instead of -inf: downstream certificates stay finite (and only
        grow, so they remain valid upper bounds).
        """
        if self.variant == RIDGE:
            return 2.0 * self.lam * (x - self.x_g)
        if self.variant == ENTROPY:
            return self.lam * (np.log(np.maximum(x, 1e-300) / self.x_g) + 1.0)
        return np.full(x.shape, self.lam)

    def feasible_start(self, n):
        """Canonical starting point: the prior, mapped onto the feasible set."""
        if self.variant == RIDGE:
            return self.x_g.copy()
        if self.variant == ENTROPY:
            return self.R * self.x_g / self.x_g.sum()
        return np.zeros(n)

    def strong_convexity_l2(self):
        """Euclidean strong-convexity constant of the penalty on its domain."""
        if self.variant == RIDGE:
            return 2.0 * self.lam
        if self.variant == ENTROPY:
            # Hessian diag(lam / x_k) with x_k <= R on the simplex.
            return self.lam / self.R
        return 0.0

    def min_value(self):
        """Lower bound of the penalty over the feasible set."""
        if self.variant == ENTROPY:
            return self.lam * self.R * math.log(self.R / self.x_g.sum())
        return 0.0


def conjugate_sigma(b_k, y):
    """Convex conjugate of the per-link loss 0.5*(z - b_k)^2.

    Returns (value, derivative) = (0.5*y^2 + b_k*y, y + b_k); the
    derivative is also the maximizing argument.
    """
    return 0.5 * y * y + b_k * y, y + b_k


def conjugate_g(reg, u):
    """Convex conjugate of the penalty over its feasible set.

    Returns (value, maximizer).  Ridge clamps the separable quadratic
    maximizers at zero; entropy is a log-sum-exp with a scaled-softmax
    maximizer.  Not defined for the lasso penalty.
    """
    u = np.asarray(u, dtype=np.float64)
    if reg.variant == RIDGE:
        if reg.lam <= 0:
            raise ValueError("ridge conjugate needs lam > 0")
        xbar = np.maximum(0.0, reg.x_g + u / (2.0 * reg.lam))
        value = float(u @ xbar) - reg.lam * float((xbar - reg.x_g) @ (xbar - reg.x_g))
        return value, xbar
    if reg.variant == ENTROPY:
        if reg.lam <= 0:
            raise ValueError("entropy conjugate needs lam > 0")
        logits = u / reg.lam + np.log(reg.x_g)
        lse = _logsumexp(logits)
        xbar = reg.R * np.exp(logits - lse)
        value = reg.lam * reg.R * (lse - math.log(reg.R))
        return value, xbar
    raise ValueError("conjugate not available for %r penalty" % reg.variant)


class ProblemInstance:
    """Penalized regression instance: 0.5*||Ax-b||^2 + penalty (+ Tikhonov)."""

    def __init__(self, A, b, reg, stats=None, tikhonov_mu=0.0, tikhonov_center=None):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (A.m,):
            raise ValueError("b must have one entry per link (length %d)" % A.m)
        if reg.variant != LASSO and reg.x_g.shape != (A.n,):
            raise ValueError("prior x_g must have one entry per demand")
        if tikhonov_mu < 0:
            raise ValueError("tikhonov_mu must be nonnegative")
        self.A = A
        self.b = b
        self.reg = reg
        self._stats = stats
        self.tikhonov_mu = float(tikhonov_mu)
        self.tikhonov_center = tikhonov_center

    @property
    def n(self):
        return self.A.n

    @property
    def m(self):
        return self.A.m

    @property
    def stats(self):
        if self._stats is None:
            from .routes import stats as _stats
            self._stats = _stats(self.A)
        return self._stats

    def with_tikhonov(self, mu, center):
        return ProblemInstance(
            self.A, self.b, self.reg, stats=self._stats,
            tikhonov_mu=mu, tikhonov_center=np.asarray(center, dtype=np.float64),
        )

    def feasible_start(self):
        return self.reg.feasible_start(self.n)

    def residual(self, x):
        return self.A.matvec(x) - self.b

    def _check_domain(self, x):
        if np.any(x < 0):
            raise ValueError("point has a negative component")

    def objective(self, x, validate=True):
        x = np.asarray(x, dtype=np.float64)
        if validate:
            self._check_domain(x)
        r = self.residual(x)
        val = 0.5 * float(r @ r) + self.reg.value(x)
        if self.tikhonov_mu:
            d = x - self.tikhonov_center
            val += 0.5 * self.tikhonov_mu * float(d @ d)
        return val

    def lower_bound(self):
        """Cheap lower bound on the objective, used for relative accuracy."""
        return self.reg.min_value()

    def smooth_value(self, x):
        """Value of the smooth part only (data term plus Tikhonov)."""
        x = np.asarray(x, dtype=np.float64)
        r = self.residual(x)
        val = 0.5 * float(r @ r)
        if self.tikhonov_mu:
            d = x - self.tikhonov_center
            val += 0.5 * self.tikhonov_mu * float(d @ d)
        return val

    def smooth_grad(self, x):
        """Gradient of the smooth part, A^T(Ax - b) plus any Tikhonov term."""
        x = np.asarray(x, dtype=np.float64)
        g = self.A.rmatvec(self.residual(x))
        if self.tikhonov_mu:
            g = g + self.tikhonov_mu * (x - self.tikhonov_center)
        return g

    def full_grad(self, x):
        return self.smooth_grad(x) + self.reg.grad(x)

    def smooth_lipschitz(self, l_source="power_estimate"):
        """Curvature constant matched to the penalty's proximal geometry.

        Euclidean penalties use the top Gram eigenvalue (or its trace
        bound); the entropy penalty pairs the max column norm with the
        simplex mass R so that one constant serves the entropic prox.
        """
        st = self.stats
        mu = self.tikhonov_mu
        if self.reg.variant == ENTROPY:
            return (st.max_col_sq + mu) * self.reg.R
        if l_source == "trace_bound":
            sig = st.trace_bound
        elif l_source == "power_estimate":
            # small safety factor: power iteration approaches from below
            sig = 1.01 * st.sigma_max_est
        elif l_source == "backtracking":
            sig = max(st.max_col_sq, 1.0)
        else:
            raise ValueError("unknown l_source %r" % l_source)
        return sig + mu

    def coordinate_lipschitz(self):
        """Per-coordinate curvature of the smooth part (column nnz + mu)."""
        return self.A.col_nnz.astype(np.float64) + self.tikhonov_mu

    def strong_convexity(self):
        """Euclidean strong-convexity constant of the full objective."""
        return self.reg.strong_convexity_l2() + self.tikhonov_mu

    def composite_prox(self, x, grad, L):
        """argmin_z <grad, z> + L*D(z, x) + penalty(z) over the feasible set.

        D is half squared Euclidean distance for ridge/lasso and the
        Kullback-Leibler divergence for entropy (computed in log space, so
        the normalization never under- or overflows).
        """
        if L <= 0:
            raise ValueError("prox curvature L must be positive")
        x = np.asarray(x, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        reg = self.reg
        if reg.variant == RIDGE:
            lam = reg.lam
            return np.maximum(
                0.0, (L * x + 2.0 * lam * reg.x_g - grad) / (L + 2.0 * lam)
            )
        if reg.variant == LASSO:
            return np.maximum(0.0, x - (grad + reg.lam) / L)
        lam = reg.lam
        with np.errstate(divide="ignore"):
            logx = np.log(x)       # -inf where x_k == 0; such mass stays zero
        logits = (L * logx + lam * np.log(reg.x_g) - grad) / (L + lam)
        lse = _logsumexp(logits)
        return reg.R * np.exp(logits - lse)

    def gap_certificate(self, x, mu):
        """Computable upper bound on the objective gap at ``x``.

        For a mu-strongly-convex objective, the gap is at most
        ``max_z <grad(x), x - z> - mu/2 ||z - x||^2`` over the feasible
        set.  Over the orthant this splits into independent
        one-dimensional concave maximizations; over the simplex the
        equality multiplier is found exactly by waterfilling (without it
        the bound stays bounded away from zero at the constrained
        optimum).
        """
        if mu <= 0:
            raise ValueError("certificate needs mu > 0")
        x = np.asarray(x, dtype=np.float64)
        self._check_domain(x)
        g = self.full_grad(x)
        if self.reg.variant != ENTROPY:
            interior = g <= mu * x
            val = np.where(interior, g * g / (2.0 * mu), g * x - 0.5 * mu * x * x)
            return float(np.sum(val))
        # maximize over the mass-R simplex: z_k(nu) = max(0, x_k - (g_k+nu)/mu)
        # with nu chosen so that sum z = R
        R = self.reg.R
        c = mu * x - g          # z_k > 0 iff nu < c_k
        order = np.argsort(c)[::-1]
        base = x - g / mu
        prefix = np.cumsum(base[order])
        nu = None
        for j in range(1, x.size + 1):
            nu_j = mu * (prefix[j - 1] - R) / j
            upper = c[order[j - 1]]
            lower = c[order[j]] if j < x.size else -np.inf
            if lower <= nu_j <= upper:
                nu = nu_j
                break
        if nu is None:
            nu = mu * (prefix[-1] - R) / x.size
        z = np.maximum(0.0, x - (g + nu) / mu)
        d = x - z
        return float(g @ d - 0.5 * mu * float(d @ d))


class ProjectionInstance:
    """Projection of the prior onto the load equations: min g(x), Ax = b.

    The penalty weight is pinned at one (ridge or entropy only); the dual
    function of the constrained problem has an explicit inner solution.
    """

    def __init__(self, A, b, reg, stats=None):
        if reg.variant not in (RIDGE, ENTROPY):
            raise ValueError("projection supports ridge and entropy penalties only")
        if reg.lam != 1.0:
            raise ValueError("projection penalty must have lam = 1")
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (A.m,):
            raise ValueError("b must have one entry per link (length %d)" % A.m)
        self.A = A
        self.b = b
        self.reg = reg
        self._stats = stats

    @property
    def n(self):
        return self.A.n

    @property
    def m(self):
        return self.A.m

    @property
    def stats(self):
        if self._stats is None:
            from .routes import stats as _stats
            self._stats = _stats(self.A)
        return self._stats

    def g(self, x):
        return self.reg.value(x)

    def penalized(self, K):
        """Equivalent penalized instance: minimizing 0.5||Ax-b||^2 + g/K
        has the same solution as g + (K/2)||Ax-b||^2."""
        if K <= 0:
            raise ValueError("penalty weight K must be positive")
        if self.reg.variant == RIDGE:
            reg = Regularizer.ridge(1.0 / K, self.reg.x_g)
        else:
            reg = Regularizer.entropy(1.0 / K, self.reg.x_g, self.reg.R)
        return ProblemInstance(self.A, self.b, reg, stats=self._stats)

    def dual_oracle(self, y):
        """Dual function value, gradient and inner minimizer at ``y``.

        x(y) minimizes g(x) + <y, Ax - b> over the feasible set; the dual
        gradient is the constraint residual A x(y) - b.
        """
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError("y must have one entry per link (length %d)" % self.m)
        aty = self.A.rmatvec(y)
        reg = self.reg
        if reg.variant == RIDGE:
            x = np.maximum(0.0, reg.x_g - 0.5 * aty)
            gval = reg.value(x)
        else:
            logits = np.log(reg.x_g) - aty
            lse = _logsumexp(logits)
            x = reg.R * np.exp(logits - lse)
            # sum x * log(x/x_g) evaluated from the logits, avoiding log(tiny)
            gval = float(np.sum(x * (-aty - lse + math.log(reg.R))))
        grad = self.A.matvec(x) - self.b
        phi = gval + float(y @ grad)
        return phi, grad, x

    def dual_lipschitz(self, l_source="power_estimate"):
        """Gradient Lipschitz constant of the dual function."""
        st = self.stats
        if self.reg.variant == ENTROPY:
            # penalty is (1/R)-strongly convex in the 1-norm
            return max(st.max_col_sq, 1) * self.reg.R
        if l_source == "trace_bound":
            sig = st.trace_bound
        elif l_source == "power_estimate":
            sig = 1.01 * st.sigma_max_est
        elif l_source == "backtracking":
            sig = max(st.max_col_sq, 1.0)
        else:
            raise ValueError("unknown l_source %r" % l_source)
        # penalty is 2-strongly convex in the 2-norm
        return sig / 2.0
