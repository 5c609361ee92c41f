"""Application solvers: sparse inverse covariance, Poisson imaging, het-LASSO.

Also holds the synthetic generators and the file readers the CLI uses.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr

from .problem import ProblemInstance
from .prox_grad import GradConfig, solve_grad
from .prox_newton import NewtonConfig, SearchDirectionResult, solve_newton
from .prox_ops import L1Reg, TVNonnegReg
from .sc_core import HetLassoOracle, LogDetOracle, PoissonOracle
from .subsolver import dual_graph_decrement_sq, solve_dual_graph


# ---------------------------------------------------------------- graph

@dataclass
class GraphProblem:
    """``min -log det T + tr(S T) + rho ||vec T||_1`` over ``T > 0``."""

    sigma_hat: np.ndarray
    rho: float
    theta0: Optional[np.ndarray] = None
    theta_true: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        S = np.asarray(self.sigma_hat, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("sigma_hat must be square")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("sigma_hat must be symmetric")
        self.sigma_hat = 0.5 * (S + S.T)
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.theta0 is None:
            self.theta0 = np.diag(1.0 / (np.diag(self.sigma_hat) + self.rho))

    @property
    def p(self):
        return self.sigma_hat.shape[0]

    def instance(self):
        return ProblemInstance(LogDetOracle(self.sigma_hat), L1Reg(self.rho), self.theta0, "graphlasso")

    def objective(self, theta):
        return self.instance().objective(theta)

    def kkt_residual(self, theta):
        """``max |grad + v|`` over the closest subgradient ``v`` of the penalty."""
        inst = self.instance()
        g = inst.oracle.at(theta).grad()
        return inst.reg.kkt_residual(theta, g)


def _dual_direction(prob, cfg, notes):
    S, rho = prob.sigma_hat, prob.rho

    def direction(pt, warm, counters):
        U, res = solve_dual_graph(pt.x, S, rho, tol=cfg.inner_tol, warm=warm,
                                  max_iter=cfg.inner_max_iter, counters=counters)
        lam2 = dual_graph_decrement_sq(pt.x, S, rho, U, counters=counters)
        if lam2 < 0:
            if lam2 < -1e-10:
                notes.append(f"negative squared decrement {lam2:.3e} clamped to 0")
            lam2 = 0.0
        lam = math.sqrt(lam2)
        return SearchDirectionResult(s=res.s, d=res.d, lam=lam, beta=lam, inner_iters=res.inner_iters,
                                     residual=res.residual, warm_state=U, extra=U)

    def armijo_delta(pt, reg, dirn):
        # <grad, D> = -lambda^2 - rho <U, D> at the dual solution, no inverse needed
        x, d = pt.x, dirn.d
        return (-dirn.lam ** 2 - rho * float(np.vdot(dirn.extra, d))
                + reg.eval(x + d) - reg.eval(x))

    return direction, armijo_delta


def dpngs_solve(prob, cfg=None):
    """Dual proximal-Newton for graph selection.  Returns ``(Theta, trace)``.

    The iteration loop never factorizes ``Theta``: the direction comes from
    the box-constrained dual, the decrement from ``W = T (S + rho U)``.
    Factorizations charged to ``n_chol`` come only from objective
    evaluations requested by a line search.
    """
    cfg = cfg or NewtonConfig()
    if prob.rho <= 0:
        raise ValueError("the dual path needs rho > 0")
    notes = []
    direction, delta = _dual_direction(prob, cfg, notes)
    x, trace = solve_newton(prob.instance(), cfg, direction=direction, armijo_delta=delta,
                            method=f"dpngs[{cfg.strategy}]")
    trace.anomalies.extend(notes)
    return x, trace


def _graph_L_rule(pt):
    # half the largest Hessian eigenvalue, ||T^-1||_2^2 / 2
    inv = pt.state.inv()
    return 0.5 * float(np.linalg.eigvalsh(inv)[-1]) ** 2


def proxgrad_graph_solve(prob, cfg=None):
    """Proximal gradient for graph selection.  Returns ``(Theta, trace)``.

    One Cholesky per iteration (for ``T^-1``); ``L`` starts at
    ``||T^-1||_2^2 / 2`` and is halved until the step condition holds.
    """
    cfg = cfg or GradConfig(L_rule=_graph_L_rule)
    if cfg.L_rule is None:
        cfg = GradConfig(**{**cfg.__dict__, "L_rule": _graph_L_rule})
    x, trace = solve_grad(prob.instance(), cfg)
    trace.method = "proxgrad1"
    return x, trace


def synth_gmrf(p=10, density=0.2, n_samples=100, seed=0, rho=0.01, cond=10.0):
    """Random sparse Gaussian graphical model.

    Off-diagonal precision entries are nonzero with probability ``density``
    and drawn from ``+-U(0.1, 1)``; a diagonal shift sets the condition
    number to ``cond``.  ``Sigma_hat`` is the (known zero mean) sample
    covariance of ``n_samples`` draws, or the exact covariance when
    ``n_samples == 0``.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if not 0 <= density < 1:
        raise ValueError("density must lie in [0, 1)")
    if not 1 < cond <= 1e3:
        raise ValueError("cond must lie in (1, 1e3]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(p, 1)
    on = rng.random(iu[0].size) < density
    vals = rng.uniform(0.1, 1.0, iu[0].size) * rng.choice([-1.0, 1.0], iu[0].size)
    B = np.zeros((p, p))
    B[iu] = np.where(on, vals, 0.0)
    B = B + B.T
    ev = np.linalg.eigvalsh(B)
    lo, hi = ev[0], ev[-1]
    if hi - lo < 1e-12:
        theta = np.eye(p)
    else:
        theta = B + (hi - cond * lo) / (cond - 1.0) * np.eye(p)
        theta /= np.mean(np.diag(theta))
    sigma = np.linalg.inv(theta)
    sigma = 0.5 * (sigma + sigma.T)
    if n_samples == 0:
        S = sigma
    else:
        Z = rng.standard_normal((n_samples, p)) @ np.linalg.cholesky(sigma).T
        S = Z.T @ Z / n_samples
        S = 0.5 * (S + S.T)
    return GraphProblem(S, rho, theta_true=theta)


# -------------------------------------------------------------- poisson

@dataclass
class PoissonProblem:
    """``min sum(A x - y log A x) + rho TV(x)`` over ``x >= 0`` on an image grid."""

    A: object
    y: np.ndarray
    rho: float
    height: int
    width: int
    x0: Optional[np.ndarray] = None
    x_true: Optional[np.ndarray] = field(default=None, repr=False)
    inner_tol: float = 1e-6
    inner_max_iter: int = 200

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.height * self.width != self.A.shape[1]:
            raise ValueError("image shape does not match A")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.x0 is None:
            self.x0 = default_poisson_start(self.A, self.y)

    @property
    def oracle(self):
        if not hasattr(self, "_oracle"):
            self._oracle = PoissonOracle(self.A, self.y)
        return self._oracle

    @property
    def M(self):
        return self.oracle.M

    def instance(self):
        # the standardized loss carries the factor M^2/4, so the penalty does too
        reg = TVNonnegReg(self.rho * self.oracle.scale, self.height, self.width,
                          self.inner_tol, self.inner_max_iter)
        return ProblemInstance(self.oracle, reg, self.x0, "poisson")

    def fixed_point_residual(self, x, L):
        """``||x - prox(x - grad/L)|| / max(1, ||x||)`` for the standardized problem."""
        inst = self.instance()
        g = inst.oracle.at(x).grad()
        s = inst.reg.prox(x - g / L, 1.0 / L, {})
        return float(np.linalg.norm(x - s)) / max(1.0, float(np.linalg.norm(x)))


def default_poisson_start(A, y, floor=1e-3):
    """Positive part of the least-squares fit plus a small floor."""
    x = lsqr(A, y, atol=1e-8, btol=1e-8)[0]
    scale = max(float(np.mean(np.abs(x))), 1.0) if x.size else 1.0
    return np.maximum(x, 0.0) + floor * scale


def poisson_solve(prob, cfg=None):
    """Proximal gradient (``greedy=True`` for the greedy variant).  Returns ``(x, trace)``.

    The TV prox is solved with weight ``rho M^2 / (4 L_k)`` each
    iteration, warm-started from the previous dual iterate.
    """
    cfg = cfg or GradConfig()
    x, trace = solve_grad(prob.instance(), cfg)
    trace.method = "proxgrad2g" if cfg.greedy else "proxgrad2"
    if trace.records:
        trace.extras["residual"] = prob.fixed_point_residual(x, trace.records[-1].L)
    return x, trace


def gaussian_kernel(size=5, std=1.0):
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / std) ** 2)
    k = np.outer(k, k)
    return k / k.sum()


def blur_matrix(height, width, kernel=None):
    """Sparse convolution with replicate boundary; rows sum to ``kernel.sum()``."""
    n = height * width
    if kernel is None:
        return sparse.identity(n, format="csr")
    kernel = np.asarray(kernel, dtype=float)
    kh, kw = kernel.shape
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    rows, cols, vals = [], [], []
    for a in range(kh):
        for b in range(kw):
            if kernel[a, b] == 0:
                continue
            si = np.clip(ii + a - kh // 2, 0, height - 1)
            sj = np.clip(jj + b - kw // 2, 0, width - 1)
            rows.append((ii * width + jj).ravel())
            cols.append((si * width + sj).ravel())
            vals.append(np.full(n, kernel[a, b]))
    A = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
    return A.tocsr()


def phantom(size=32):
    """Piecewise-constant test image with values in ``[0, 1]``."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)
    img = np.full((size, size), 0.1)
    img[((xx - 0.5) / 0.4) ** 2 + ((yy - 0.5) / 0.45) ** 2 <= 1] = 0.5
    img[((xx - 0.38) / 0.12) ** 2 + ((yy - 0.45) / 0.2) ** 2 <= 1] = 0.9
    img[(xx > 0.55) & (xx < 0.72) & (yy > 0.3) & (yy < 0.7)] = 0.25
    img[((xx - 0.5) / 0.08) ** 2 + ((yy - 0.8) / 0.06) ** 2 <= 1] = 1.0
    return img


def synth_poisson(image=None, blur="gaussian", intensity=1e3, seed=0, rho=2.5e-5, size=32):
    """Blur, scale by ``intensity`` and draw Poisson counts.

    ``image`` defaults to :func:`phantom`; ``blur`` is ``"gaussian"``,
    ``None`` (identity) or an explicit kernel.  ``A = intensity * B`` with
    ``B`` the sparse blur operator.
    """
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    img = phantom(size) if image is None else np.asarray(image, dtype=float)
    if np.any(img < 0):
        raise ValueError("image must be nonnegative")
    h, w = img.shape
    kernel = gaussian_kernel() if isinstance(blur, str) and blur == "gaussian" else blur
    A = (intensity * blur_matrix(h, w, kernel)).tocsr()
    rng = np.random.default_rng(seed)
    y = rng.poisson(A @ img.ravel()).astype(float)
    if not np.any(y > 0):
        return PoissonProblem(A, y, rho, h, w, x0=np.ones(h * w), x_true=img)
    return PoissonProblem(A, y, rho, h, w, x_true=img)


# ------------------------------------------------------------- het-LASSO

@dataclass
class HetLassoProblem:
    """``min -log s + ||X b - s y||^2/(2n) + rho ||b||_1`` over ``s > 0``."""

    X: np.ndarray
    y: np.ndarray
    rho: float
    x0: Optional[np.ndarray] = None
    beta_true: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x0 is None:
            s0 = float(np.std(self.y))
            self.x0 = np.concatenate([np.zeros(self.X.shape[1]), [s0 if s0 > 0 else 1.0]])
        if self.x0[-1] <= 0:
            raise ValueError("initial sigma must be positive")

    def instance(self):
        p = self.X.shape[1]
        mask = np.zeros(p + 1, dtype=bool)
        mask[-1] = True
        return ProblemInstance(HetLassoOracle(self.X, self.y), L1Reg(self.rho, mask), self.x0, "hetlasso")


def hetlasso_solve(prob, cfg=None, check_every=10):
    """Proximal gradient for het-LASSO.  Returns ``((beta, sigma), trace)``.

    The decrement uses the oracle's closed form; every ``check_every``
    iterations it is compared with the plain Hessian quadratic form.
    """
    cfg = cfg or GradConfig()
    inst = prob.instance()
    cfg = GradConfig(**{**cfg.__dict__, "keep_history": True})
    x, trace = solve_grad(inst, cfg)
    orc = inst.oracle
    for j in range(0, len(trace.extras["directions"]), max(1, check_every)):
        xj, d = trace.extras["iterates"][j], trace.extras["directions"][j]
        pt = orc.at(xj)
        closed, plain = pt.quad(d), float(np.vdot(d, pt.hess_vec(d)))
        if abs(closed - plain) > 1e-8 * max(abs(plain), 1e-300):
            trace.anomalies.append(f"k={j}: closed-form decrement mismatch {closed:.6e} vs {plain:.6e}")
    trace.method = "hetlasso"
    return (x[:-1], float(x[-1])), trace


def synth_hetlasso(n=100, p=300, k=10, noise=0.5, seed=0, rho=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[rng.choice(p, k, replace=False)] = rng.choice([-1.0, 1.0], k) * rng.uniform(1.0, 2.0, k)
    y = X @ beta + noise * rng.standard_normal(n)
    if rho is None:
        rho = math.sqrt(2.0 * math.log(p) / n)
    return HetLassoProblem(X, y, rho, beta_true=beta)


# ------------------------------------------------------------------- I/O

def read_matrix_market(path):
    """Dense symmetric matrix from a Matrix Market file (coordinate or array)."""
    from scipy.io import mmread

    m = mmread(str(path))
    m = m.toarray() if sparse.issparse(m) else np.asarray(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    return 0.5 * (m + m.T)


def read_xy_csv(path, target="y"):
    """Headered CSV; the column named ``target`` is the response, the rest form ``X``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty csv")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise ValueError(f"csv has no column {target!r}")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    j = header.index(target)
    return np.delete(data, j, axis=1), data[:, j]


def read_pgm(path):
    """Grayscale PGM (P2 or P5, max value up to 65535) as a float array."""
    from PIL import Image

    with Image.open(path) as im:
        if im.format != "PPM" or im.mode not in ("L", "I", "I;16", "I;16B"):
            raise ValueError(f"{path} is not a grayscale PGM")
        return np.asarray(im, dtype=float)


def graph_from_file(path, rho):
    return GraphProblem(read_matrix_market(path), rho)


def poisson_from_pgm(path, rho=2.5e-5, intensity=1e3, seed=0):
    img = read_pgm(path)
    if img.max() > 0:
        img = img / img.max()
    return synth_poisson(img, intensity=intensity, seed=seed, rho=rho)


def hetlasso_from_csv(path, rho):
    X, y = read_xy_csv(path)
    return HetLassoProblem(X, y, rho)


__all__ = [
    "GraphProblem", "PoissonProblem", "HetLassoProblem", "dpngs_solve", "proxgrad_graph_solve",
    "poisson_solve", "hetlasso_solve", "synth_gmrf", "synth_poisson", "synth_hetlasso",
    "read_matrix_market", "read_xy_csv", "read_pgm",
]
