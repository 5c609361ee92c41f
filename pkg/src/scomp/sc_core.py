"""Self-concordant smooth oracles and local-geometry primitives.

Every oracle works on arrays of its natural shape (a ``p x p`` matrix for the
log-determinant, flat vectors otherwise).  Inner products are ``np.vdot`` so
matrix variables never need explicit vectorization.

Evaluation goes through a :class:`Point` handle, which caches whatever the
oracle factorizes at ``x`` (e.g. a Cholesky factor) and charges the cost to
an optional :class:`~scomp.trace.Counters`.
"""

import math

import numpy as np
from scipy import sparse
from scipy.linalg import lapack

from .errors import DomainError, OracleConsistencyError, RankDeficiencyError

SIGMA_BAR = 0.25 * (5.0 - math.sqrt(17.0))


def omega(t):
    """``t - ln(1 + t)``, the lower self-concordant model gap."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("omega is defined for t >= 0")
    out = t - np.log1p(t)
    return float(out) if out.ndim == 0 else out


def omega_star(t):
    """``-t - ln(1 - t)`` on ``[0, 1)``, the upper model gap."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= 1):
        raise DomainError("omega_star is defined for 0 <= t < 1")
    out = -t - np.log1p(-t)
    return float(out) if out.ndim == 0 else out


def _chol(a):
    """Lower Cholesky factor of a symmetric matrix, or ``(None, pivot)``."""
    c, info = lapack.dpotrf(np.asarray(a, dtype=float), lower=1, clean=1)
    if info != 0:
        return None, info
    return c, 0


def _dense_solve(h, r):
    c, info = _chol(h)
    if c is None:
        raise RankDeficiencyError(info)
    x, info = lapack.dpotrs(c, np.asarray(r, dtype=float).reshape(len(h), -1), lower=1)
    return x.reshape(np.shape(r))


class Point:
    """Evaluation handle for one oracle at one point.

    Not thread-safe; owned by a single solve.
    """

    def __init__(self, oracle, x, counters=None):
        self.oracle = oracle
        self.x = np.asarray(x, dtype=float)
        self.counters = counters
        self._ready = False
        self._state = None
        self._grad = None

    @property
    def state(self):
        if not self._ready:
            self._state = self.oracle._prepare(self.x, self.counters)
            self._ready = True
        return self._state

    @property
    def in_domain(self):
        return self.state is not None

    def _need_domain(self):
        if self.state is None:
            raise DomainError("point is outside dom f")

    def value(self):
        if self.state is None:
            return math.inf
        return float(self.oracle._value(self.x, self._state))

    def grad(self):
        if self._grad is None:
            self._need_domain()
            self._grad = self.oracle._grad(self.x, self._state, self.counters)
        return self._grad

    def hess_vec(self, v):
        self._need_domain()
        return self.oracle._hess_vec(self.x, self._state, np.asarray(v, dtype=float), self.counters)

    def hess_solve(self, r):
        self._need_domain()
        if not self.oracle.has_hess_solve:
            raise NotImplementedError(f"{type(self.oracle).__name__} has no Hessian solve")
        return self.oracle._hess_solve(self.x, self._state, np.asarray(r, dtype=float), self.counters)

    def quad(self, v):
        """``v' H v`` (oracles may provide a cheaper closed form)."""
        self._need_domain()
        return float(self.oracle._quad(self.x, self._state, np.asarray(v, dtype=float), self.counters))

    def local_norm(self, v):
        q = self.quad(v)
        if q < 0:
            scale = float(np.vdot(v, v))
            if q < -1e-12 * max(scale, 1e-300):
                raise OracleConsistencyError(f"negative Hessian quadratic form {q:.3e}")
            return 0.0
        return math.sqrt(q)

    def dual_local_norm(self, r):
        r = np.asarray(r, dtype=float)
        q = float(np.vdot(r, self.hess_solve(r)))
        if q < 0:
            if q < -1e-12 * float(np.vdot(r, r)):
                raise OracleConsistencyError(f"negative inverse-Hessian form {q:.3e}")
            return 0.0
        return math.sqrt(q)


class SmoothOracle:
    """Base class: ``f``, its gradient, Hessian products and solves.

    Subclasses implement ``_prepare`` (return ``None`` outside ``dom f``),
    ``_value``, ``_grad``, ``_hess_vec`` and optionally ``_hess_solve`` and
    ``_quad``.
    """

    dim = 0
    shape = ()
    has_hess_solve = True

    def at(self, x, counters=None):
        return Point(self, x, counters)

    # convenience wrappers (no caching across calls)
    def value_at(self, x):
        return self.at(x).value()

    def grad_at(self, x):
        return self.at(x).grad()

    def hess_vec_at(self, x, v):
        return self.at(x).hess_vec(v)

    def hess_solve_at(self, x, r):
        return self.at(x).hess_solve(r)

    def in_domain(self, x):
        return self.at(x).in_domain

    def _quad(self, x, st, v, counters):
        return np.vdot(v, self._hess_vec(x, st, v, counters))

    def _hess_solve(self, x, st, r, counters):
        raise NotImplementedError

    def hessian_matrix(self, x):
        """Dense Hessian in the flattened coordinates (for small tests)."""
        pt = self.at(x)
        n = pt.x.size
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            cols.append(pt.hess_vec(e.reshape(pt.x.shape)).ravel())
        return np.array(cols).T


class _LogDetState:
    __slots__ = ("chol", "logdet", "_inv")

    def __init__(self, chol, logdet):
        self.chol = chol
        self.logdet = logdet
        self._inv = None

    def inv(self):
        if self._inv is None:
            inv, info = lapack.dpotri(self.chol, lower=1)
            inv = np.tril(inv) + np.tril(inv, -1).T
            self._inv = inv
        return self._inv


class LogDetOracle(SmoothOracle):
    """``f(T) = -log det T + tr(S T)`` on symmetric positive definite ``T``.

    The Kronecker Hessian is never formed: ``H[V] = T^-1 V T^-1`` and
    ``H^-1[R] = T R T``.
    """

    def __init__(self, sigma_hat):
        s = np.asarray(sigma_hat, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma_hat must be square")
        self.sigma_hat = 0.5 * (s + s.T)
        self.p = s.shape[0]
        self.shape = (self.p, self.p)
        self.dim = self.p * self.p

    def _prepare(self, x, counters):
        if counters is not None:
            counters.n_chol += 1
        if not np.all(np.isfinite(x)):
            return None
        c, info = _chol(x)
        if c is None:
            return None
        return _LogDetState(c, 2.0 * float(np.sum(np.log(np.diag(c)))))

    def _value(self, x, st):
        return -st.logdet + float(np.vdot(self.sigma_hat, x))

    def _grad(self, x, st, counters):
        return self.sigma_hat - st.inv()

    def _hess_vec(self, x, st, v, counters):
        inv = st.inv()
        if counters is not None:
            counters.n_matmul += 2
        return inv @ v @ inv

    def _hess_solve(self, x, st, r, counters):
        if counters is not None:
            counters.n_matmul += 2
        return x @ r @ x


class PoissonOracle(SmoothOracle):
    """Standardized Poisson negative log-likelihood.

    ``f(x) = (M^2/4) * sum_i (a_i'x - y_i log a_i'x)`` with
    ``M = 2 max{1/sqrt(y_i) : y_i > 0}``.  Rows with ``y_i = 0`` keep only
    their linear term and impose no domain constraint.
    """

    def __init__(self, A, y, standardized=True):
        self.A = A if sparse.issparse(A) else np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        if self.A.shape[0] != self.y.size:
            raise ValueError("A and y have incompatible shapes")
        if np.any(self.y < 0):
            raise ValueError("counts must be nonnegative")
        pos = self.y > 0
        self.pos = pos
        self.M = 2.0 * float(np.max(1.0 / np.sqrt(self.y[pos]))) if pos.any() else 2.0
        self.scale = self.M ** 2 / 4.0 if standardized else 1.0
        self.dim = self.A.shape[1]
        self.shape = (self.dim,)
        self._colsum = np.asarray(self.A.sum(axis=0)).ravel()

    def _prepare(self, x, counters):
        if not np.all(np.isfinite(x)):
            return None
        ax = self.A @ x
        if np.any(ax[self.pos] <= 0):
            return None
        return ax

    def _value(self, x, ax):
        return self.scale * (float(np.sum(ax)) - float(np.dot(self.y[self.pos], np.log(ax[self.pos]))))

    def _ratio(self, ax):
        r = np.zeros_like(ax)
        r[self.pos] = self.y[self.pos] / ax[self.pos]
        return r

    def _grad(self, x, ax, counters):
        return self.scale * (self._colsum - self.A.T @ self._ratio(ax))

    def _weights(self, ax):
        w = np.zeros_like(ax)
        w[self.pos] = self.y[self.pos] / ax[self.pos] ** 2
        return w

    def _hess_vec(self, x, ax, v, counters):
        return self.scale * (self.A.T @ (self._weights(ax) * (self.A @ v)))

    def _quad(self, x, ax, v, counters):
        av = self.A @ v
        return self.scale * float(np.dot(self._weights(ax), av * av))

    def _hess_solve(self, x, ax, r, counters):
        A = self.A.toarray() if sparse.issparse(self.A) else self.A
        h = self.scale * (A.T * self._weights(ax)) @ A
        return _dense_solve(h, r)


class HetLassoOracle(SmoothOracle):
    """``f(beta, sigma) = -log sigma + ||X beta - sigma y||^2 / (2n)``.

    The variable is the flat vector ``(beta, sigma)`` of length ``p + 1``.
    """

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        self.n, self.p = self.X.shape
        if self.y.size != self.n:
            raise ValueError("X and y have incompatible shapes")
        self.yy = float(self.y @ self.y)
        self.dim = self.p + 1
        self.shape = (self.dim,)

    def _prepare(self, x, counters):
        if not np.all(np.isfinite(x)) or x[-1] <= 0:
            return None
        return self.X @ x[:-1] - x[-1] * self.y  # residual z

    def _value(self, x, z):
        return -math.log(x[-1]) + float(z @ z) / (2 * self.n)

    def _grad(self, x, z, counters):
        return np.concatenate([self.X.T @ z / self.n, [-1.0 / x[-1] - float(self.y @ z) / self.n]])

    def _hess_vec(self, x, z, v, counters):
        xv = self.X @ v[:-1]
        top = self.X.T @ (xv - v[-1] * self.y) / self.n
        last = -float(self.y @ xv) / self.n + (x[-1] ** -2 + self.yy / self.n) * v[-1]
        return np.concatenate([top, [last]])

    def _quad(self, x, z, v, counters):
        # closed-form decrement with z_k = X d_beta
        zk = self.X @ v[:-1]
        ds = v[-1]
        return ((x[-1] ** -2 + self.yy / self.n) * ds * ds + float(zk @ zk) / self.n
                - 2.0 * ds * float(self.y @ zk) / self.n)

    def hessian(self, x):
        n = self.n
        h = np.empty((self.dim, self.dim))
        h[:-1, :-1] = self.X.T @ self.X / n
        xy = self.X.T @ self.y / n
        h[:-1, -1] = -xy
        h[-1, :-1] = -xy
        h[-1, -1] = x[-1] ** -2 + self.yy / n
        return h

    def _hess_solve(self, x, z, r, counters):
        return _dense_solve(self.hessian(x), r)


class BarrierQuadOracle(SmoothOracle):
    """``f(x) = -t log(sigma2 - ||A x - y||^2)``, self-concordant for ``t >= 1``."""

    def __init__(self, A, y, sigma2, t=1.0):
        if t < 1:
            raise DomainError("barrier weight t must be >= 1 for standard self-concordance")
        if sigma2 <= 0:
            raise DomainError("sigma2 must be positive")
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        self.sigma2 = float(sigma2)
        self.t = float(t)
        self.dim = self.A.shape[1]
        self.shape = (self.dim,)

    def _prepare(self, x, counters):
        if not np.all(np.isfinite(x)):
            return None
        r = self.A @ x - self.y
        s = self.sigma2 - float(r @ r)
        if s <= 0:
            return None
        return r, s

    def _value(self, x, st):
        return -self.t * math.log(st[1])

    def _grad(self, x, st, counters):
        r, s = st
        return self.t * 2.0 * (self.A.T @ r) / s

    def _hess_vec(self, x, st, v, counters):
        r, s = st
        av = self.A @ v
        atr = self.A.T @ r
        return self.t * (2.0 * (self.A.T @ av) / s + 4.0 * atr * float(r @ av) / s ** 2)

    def _hess_solve(self, x, st, r_, counters):
        r, s = st
        atr = self.A.T @ r
        h = self.t * (2.0 * self.A.T @ self.A / s + 4.0 * np.outer(atr, atr) / s ** 2)
        return _dense_solve(h, r_)


class ScaledOracle(SmoothOracle):
    """``c * f`` for a wrapped oracle ``f``; the domain is unchanged."""

    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)
        self.dim = base.dim
        self.shape = base.shape
        self.has_hess_solve = base.has_hess_solve

    def _prepare(self, x, counters):
        return self.base._prepare(x, counters)

    def _value(self, x, st):
        return self.factor * self.base._value(x, st)

    def _grad(self, x, st, counters):
        return self.factor * self.base._grad(x, st, counters)

    def _hess_vec(self, x, st, v, counters):
        return self.factor * self.base._hess_vec(x, st, v, counters)

    def _quad(self, x, st, v, counters):
        return self.factor * self.base._quad(x, st, v, counters)

    def _hess_solve(self, x, st, r, counters):
        return self.base._hess_solve(x, st, r, counters) / self.factor


def standardize(oracle, M):
    """Rescale an ``M``-self-concordant oracle to the standard constant 2."""
    if not M > 0:
        raise DomainError("M must be positive")
    c = M * M / 4.0
    if c == 1.0:
        return oracle
    return ScaledOracle(oracle, c)


def local_norm(oracle, x, v):
    """``sqrt(v' H(x) v)``."""
    return oracle.at(x).local_norm(v)


def dual_local_norm(oracle, x, r):
    """``sqrt(r' H(x)^-1 r)``."""
    return oracle.at(x).dual_local_norm(r)
