"""Shared test oracles and brute-force references."""

import itertools

import numpy as np

from scomp.sc_core import (BarrierQuadOracle, HetLassoOracle, LogDetOracle, PoissonOracle,
                           SmoothOracle, _dense_solve)

# acceptance results collected for the terminal summary: (number, ok, detail)
ACCEPTANCE = []


def record(num, ok, detail=""):
    ACCEPTANCE.append((num, bool(ok), detail))
    return ok


class QuadOracle(SmoothOracle):
    """``1/2 x'Qx + c'x`` (self-concordant: zero third derivative)."""

    def __init__(self, Q, c):
        self.Q = np.asarray(Q, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.dim = self.c.size
        self.shape = (self.dim,)

    def _prepare(self, x, counters):
        return True if np.all(np.isfinite(x)) else None

    def _value(self, x, st):
        return 0.5 * float(x @ self.Q @ x) + float(self.c @ x)

    def _grad(self, x, st, counters):
        return self.Q @ x + self.c

    def _hess_vec(self, x, st, v, counters):
        return self.Q @ v

    def _hess_solve(self, x, st, r, counters):
        return _dense_solve(self.Q, r)


def rand_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.geomspace(1.0, cond, n)
    return (q * ev) @ q.T


def sym(rng, p):
    a = rng.standard_normal((p, p))
    return 0.5 * (a + a.T)


def brute_force_l1_qp(H, b, rho):
    """``argmin 1/2 z'Hz + b'z + rho ||z||_1`` by sign-pattern enumeration."""
    n = len(b)
    best, best_z = np.inf, None
    for pat in itertools.product((-1, 0, 1), repeat=n):
        s = np.array(pat, dtype=float)
        free = s != 0
        z = np.zeros(n)
        if free.any():
            Hf = H[np.ix_(free, free)]
            z[free] = np.linalg.solve(Hf, -(b[free] + rho * s[free]))
            if np.any(z[free] * s[free] < 0):
                continue
        val = 0.5 * z @ H @ z + b @ z + rho * np.abs(z).sum()
        if val < best:
            best, best_z = val, z
    return best_z


def oracle_suite(seed=0):
    """``(name, oracle, sample_interior_point)`` for the four oracle families."""
    rng = np.random.default_rng(seed)
    p = 4
    S = rand_spd(rng, p, 5.0)

    def logdet_pt(r):
        return rand_spd(r, p, 4.0)

    A = rng.uniform(0.1, 1.0, (8, 5))
    y = rng.poisson(5.0, 8).astype(float)
    y[0] = 0.0

    def poisson_pt(r):
        return r.uniform(0.2, 2.0, 5)

    X = rng.standard_normal((10, 4))
    yh = rng.standard_normal(10)

    def het_pt(r):
        return np.concatenate([r.standard_normal(4), [r.uniform(0.3, 2.0)]])

    Ab = rng.standard_normal((6, 4))
    yb = rng.standard_normal(6)

    def barrier_pt(r):
        return 0.05 * r.standard_normal(4)

    sigma2 = float(np.sum(yb ** 2)) + 20.0
    return [
        ("logdet", LogDetOracle(S), logdet_pt),
        ("poisson", PoissonOracle(A, y), poisson_pt),
        ("hetlasso", HetLassoOracle(X, yh), het_pt),
        ("barrier", BarrierQuadOracle(Ab, yb, sigma2), barrier_pt),
    ]


def rand_dir(rng, x):
    v = rng.standard_normal(np.shape(x))
    if np.ndim(x) == 2:
        v = 0.5 * (v + v.T)
    return v
