"""Solvers for the per-iteration quadratic-plus-regularizer subproblem.

The primal problem at ``x_k`` with metric ``H`` is

    min_s  grad'(s - x_k) + 1/2 (s - x_k)' H (s - x_k) + g(s),

solved by accelerated proximal gradient with function-value restart.  For
the log-determinant objective with an l1 penalty the box-constrained dual

    min_{|U|_inf <= 1}  1/2 tr((T U)^2) + tr(Q U),  Q = (T S T - 2T)/rho

is solved instead, which needs no factorization of ``T``.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import MetricError, SubsolverFailure

POWER_INFLATE = 1.05


@dataclass
class MetricOperator:
    """A symmetric positive (semi)definite linear map ``v -> H v``."""

    apply: Callable
    template: np.ndarray
    solve: Optional[Callable] = None
    diag_hint: Optional[np.ndarray] = None
    power_iters: int = 30
    _lmax: Optional[float] = field(default=None, repr=False)

    def __call__(self, v):
        return self.apply(v)

    @property
    def largest_eig_estimate(self):
        if self._lmax is None:
            self._lmax = power_method_max_eig(self.apply, self.template, self.power_iters)
        return self._lmax


@dataclass
class SubproblemResult:
    s: np.ndarray
    d: np.ndarray
    inner_iters: int
    residual: float
    warm_state: Any = None
    first_residual: float = math.nan
    lipschitz: float = math.nan


def power_method_max_eig(op, template, iters=10, seed=0):
    """Largest eigenvalue of a symmetric PSD operator (Rayleigh quotient).

    ``template`` fixes the shape of the vectors ``op`` acts on.  A zero
    operator gives ``0.0``.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(np.shape(template))
    if np.ndim(template) == 2 and np.shape(template)[0] == np.shape(template)[1]:
        v = 0.5 * (v + v.T)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max(int(iters), 1)):
        w = op(v)
        est = float(np.vdot(v, w))
        if est < -1e-12 * float(np.linalg.norm(w)):
            raise MetricError(f"indefinite metric: Rayleigh quotient {est:.3e}")
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
    return max(float(np.vdot(v, op(v))), est, 0.0)


def project_linf_ball(U):
    """Clip entries to ``[-1, 1]``."""
    return np.clip(U, -1.0, 1.0)


def accelerated_quadratic_prox(apply_A, b, center, prox, h, z0, L, tol, max_iter):
    """Minimize ``q(z) + h(z)`` with ``q(z) = b'(z-c) + 1/2 (z-c)'A(z-c)``.

    Accelerated proximal gradient with step ``1/L``, function-value restart,
    and doubling of ``L`` when a momentum-free step fails to decrease the
    objective.  Only one application of ``A`` per iteration: products are
    propagated through the momentum combination by linearity.

    ``prox(v, t)`` returns ``argmin h(z) + ||z - v||^2/(2t)``.  Stops when
    ``||z_{j+1} - y_j|| <= tol * max(||z_{j+1}||, 1)``.

    Returns ``(z, iters, residual, first_residual, L)``.
    """
    z = np.array(z0, dtype=float)
    Az = apply_A(z - center)
    phi = float(np.vdot(b, z - center)) + 0.5 * float(np.vdot(z - center, Az)) + h(z)
    y, Ay = z, Az
    t = 1.0
    first = math.nan
    res = math.inf
    momentum_free = True
    j = 0
    for j in range(1, max_iter + 1):
        zn = prox(y - (b + Ay) / L, 1.0 / L)
        res = float(np.linalg.norm(zn - y))
        scale = max(float(np.linalg.norm(zn)), 1.0)
        if j == 1:
            first = res / scale
        Azn = apply_A(zn - center)
        phin = float(np.vdot(b, zn - center)) + 0.5 * float(np.vdot(zn - center, Azn)) + h(zn)
        if res <= tol * scale:
            return zn, j, res / scale, first, L
        if phin > phi + 1e-14 * max(abs(phi), 1.0):
            if momentum_free:
                L *= 2.0
            t = 1.0
            y, Ay = z, Az
            momentum_free = True
            continue
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / tn
        y = zn + beta * (zn - z)
        Ay = Azn + beta * (Azn - Az)
        z, Az, phi, t = zn, Azn, phin, tn
        momentum_free = beta == 0.0
    raise SubsolverFailure(res / max(float(np.linalg.norm(z)), 1.0), j)


def solve_primal_fista(H, grad, x_k, reg, tol=1e-6, warm=None, max_iter=1000, counters=None):
    """Solve the primal subproblem with metric ``H`` (a :class:`MetricOperator`).

    Returns a :class:`SubproblemResult` whose ``s`` satisfies the prox
    fixed-point condition to ``tol`` (relative).
    """
    x_k = np.asarray(x_k, dtype=float)
    grad = np.asarray(grad, dtype=float)
    lmax = H.largest_eig_estimate
    if lmax <= 0:
        raise MetricError("metric has no positive curvature")
    L = POWER_INFLATE * lmax
    z0 = x_k if warm is None else np.asarray(warm, dtype=float)
    workspace = {}

    def prox(v, step):
        if counters is not None:
            counters.n_prox += 1
        return reg.prox(v, step, workspace)

    s, iters, res, first, L = accelerated_quadratic_prox(
        H.apply, grad, x_k, prox, reg.eval, z0, L, tol, max_iter)
    return SubproblemResult(s=s, d=s - x_k, inner_iters=iters, residual=res,
                            warm_state=s, first_residual=first, lipschitz=L)


def _box_prox(v, t):
    return project_linf_ball(v)


def _box_indicator(U):
    return 0.0


def solve_dual_graph(Theta, Sigma_hat, rho, tol=1e-8, warm=None, max_iter=1000,
                     counters=None, power_iters=20):
    """Box-constrained dual of the l1-penalized log-det Newton subproblem.

    Returns ``(U_star, SubproblemResult)`` where ``s``/``d`` hold the primal
    point and direction recovered from ``U_star``.
    """
    Theta = np.asarray(Theta, dtype=float)
    S = np.asarray(Sigma_hat, dtype=float)
    p = Theta.shape[0]
    if rho <= 0:
        raise ValueError("rho must be positive for the dual path")

    def mm(a, b):
        if counters is not None:
            counters.n_matmul += 1
        return a @ b

    Q = (mm(mm(Theta, S), Theta) - 2.0 * Theta) / rho

    def apply_A(U):
        return mm(mm(Theta, U), Theta)

    gmax = power_method_max_eig(lambda v: Theta @ v, np.zeros(p), power_iters)
    L = POWER_INFLATE * gmax * gmax
    U0 = np.zeros((p, p)) if warm is None else np.asarray(warm, dtype=float)
    U, iters, res, first, L = accelerated_quadratic_prox(
        apply_A, Q, np.zeros((p, p)), _box_prox, _box_indicator, U0, L, tol, max_iter)
    U = 0.5 * (U + U.T)
    delta = recover_primal_direction(Theta, S, rho, U, counters=counters)
    return U, SubproblemResult(s=Theta + delta, d=delta, inner_iters=iters, residual=res,
                               warm_state=U, first_residual=first, lipschitz=L)


def recover_primal_direction(Theta, Sigma_hat, rho, U_star, counters=None):
    """``-((T S - I) T + rho T U T)``, symmetrized."""
    Theta = np.asarray(Theta, dtype=float)
    p = Theta.shape[0]
    TS = Theta @ np.asarray(Sigma_hat, dtype=float)
    TU = Theta @ U_star
    if counters is not None:
        counters.n_matmul += 4
    delta = -((TS - np.eye(p)) @ Theta + rho * TU @ Theta)
    return 0.5 * (delta + delta.T)


def dual_graph_decrement_sq(Theta, Sigma_hat, rho, U_star, counters=None):
    """``p - 2 tr W + tr W^2`` with ``W = T (S + rho U)`` (the squared decrement)."""
    W = np.asarray(Theta) @ (np.asarray(Sigma_hat) + rho * np.asarray(U_star))
    if counters is not None:
        counters.n_matmul += 1
    p = W.shape[0]
    # tr(W^2) from the elementwise product, no second matmul
    return p - 2.0 * float(np.trace(W)) + float(np.sum(W * W.T))
