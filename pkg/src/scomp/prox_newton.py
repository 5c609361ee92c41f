"""Proximal-Newton method with analytic step sizes.

Two phases: damped steps ``alpha = 1/(1 + lambda)`` while the decrement
``lambda`` exceeds ``sigma``, then full steps until ``lambda <= eps``.  The
damped step can optionally be refined by a line search (``BtkLS``,
``E-BtkLS`` or the forward search ``FwLS``).
"""

import math
import time
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .errors import CurvatureError, DomainError, SCompError
from .prox_ops import ZeroReg
from .sc_core import SIGMA_BAR, omega, omega_star
from .subsolver import MetricOperator, solve_primal_fista
from .trace import SolverTrace

STRATEGIES = ("NoLS", "BtkLS", "E-BtkLS", "FwLS")
# radius of damped-step quadratic convergence, recorded for reference only
SIGMA_DAMPED = math.sqrt(5.0) - 2.0
QUAD_CONST = 3.57


@dataclass
class NewtonConfig:
    sigma: float = 0.2
    eps: float = 1e-6
    max_iter: int = 200
    strategy: str = "NoLS"
    inner_tol: float = 1e-8
    inner_max_iter: int = 1000
    counters_enabled: bool = True
    btk_factor: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 30
    fw_factor: float = 2.0
    fw_max_probes: int = 6

    def __post_init__(self):
        if not 0 < self.sigma <= SIGMA_BAR + 1e-12:
            raise ValueError(f"sigma must lie in (0, {SIGMA_BAR:.6f}]")
        if not 0 < self.eps < self.sigma:
            raise ValueError("eps must lie in (0, sigma)")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")


@dataclass
class SearchDirectionResult:
    s: np.ndarray
    d: np.ndarray
    lam: float
    beta: float
    inner_iters: int = 0
    residual: float = 0.0
    warm_state: Any = None
    extra: Any = None


@dataclass
class StepChoice:
    alpha: float
    evals: int = 0
    degraded: bool = False
    f_new: Optional[float] = None
    point: Any = None


def analytic_damped_step(lam):
    """``1 / (1 + lambda)``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return 1.0 / (1.0 + lam)


def newton_direction(oracle, reg, x_k, subcfg=None, warm=None, counters=None, point=None):
    """Proximal-Newton direction at ``x_k`` (metric = Hessian of ``f``)."""
    subcfg = subcfg or NewtonConfig()
    pt = point if point is not None else oracle.at(x_k, counters)
    if not pt.in_domain:
        raise DomainError("x_k is outside dom f")
    x_k = pt.x
    grad = pt.grad()
    if reg is None or isinstance(reg, ZeroReg):
        d = -pt.hess_solve(grad)
        lam = pt.local_norm(d)
        return SearchDirectionResult(s=x_k + d, d=d, lam=lam, beta=lam)
    H = MetricOperator(pt.hess_vec, template=x_k)
    # the iterate-change test is relative to ||s||, not ||d||: tighten it
    # below eps or the warm-started solve stops as soon as d is of order eps
    tol = max(min(subcfg.inner_tol, 1e-3 * subcfg.eps), 1e-13)
    res = solve_primal_fista(H, grad, x_k, reg, tol=tol, warm=warm,
                             max_iter=subcfg.inner_max_iter, counters=counters)
    lam = pt.local_norm(res.d)
    return SearchDirectionResult(s=res.s, d=res.d, lam=lam, beta=lam, inner_iters=res.inner_iters,
                                 residual=res.residual, warm_state=res.warm_state)


def _needs_exact_f(strategy, lam, sigma):
    return strategy == "BtkLS" or (strategy == "E-BtkLS" and lam > sigma)


def select_step(strategy, lam, phi, sigma=0.2, f_ref=None, f_upper=None, armijo_delta=None, cfg=None):
    """Choose the step along a proximal-Newton direction.

    ``phi(alpha)`` returns ``(F(x + alpha d), handle)`` with ``F = inf``
    outside the domain; each call counts as one objective evaluation.
    ``f_ref`` is the exact ``F(x)`` (needed by the backtracking searches),
    ``f_upper`` an upper bound on it (used by the forward search), and
    ``armijo_delta`` the model decrease ``grad'd + g(x+d) - g(x)``.
    """
    cfg = cfg or NewtonConfig(sigma=sigma)
    a_star = analytic_damped_step(lam)
    full = lam <= sigma
    if strategy == "NoLS":
        return StepChoice(1.0 if full else a_star)
    if strategy == "FwLS":
        if full:
            return StepChoice(1.0)
        best = StepChoice(a_star)
        # F(x + a* d) <= F(x) - omega(lam), so the bound seeds the comparison
        best_f = f_upper - omega(lam) if f_upper is not None else math.inf
        a, evals = a_star, 0
        for _ in range(cfg.fw_max_probes):
            if a >= 1.0:
                break
            a = min(cfg.fw_factor * a, 1.0)
            fa, h = phi(a)
            evals += 1
            if fa < best_f:
                best, best_f = StepChoice(a, f_new=fa, point=h), fa
            else:
                break
        best.evals = evals
        return best
    if strategy in ("BtkLS", "E-BtkLS"):
        enhanced = strategy == "E-BtkLS"
        if enhanced and full:
            return StepChoice(1.0)
        if f_ref is None or armijo_delta is None:
            raise ValueError("backtracking needs f_ref and armijo_delta")
        a, evals = 1.0, 0
        for _ in range(cfg.max_backtracks):
            if enhanced and a <= a_star:
                return StepChoice(a_star, evals=evals)
            fa, h = phi(a)
            evals += 1
            if fa <= f_ref + cfg.armijo_c * a * armijo_delta:
                return StepChoice(a, evals=evals, f_new=fa, point=h)
            a *= cfg.btk_factor
        return StepChoice(a_star, evals=evals, degraded=not enhanced)
    raise ValueError(f"unknown strategy {strategy!r}")


def _plain_delta(pt, reg, dirn):
    x = pt.x
    return float(np.vdot(pt.grad(), dirn.d)) + reg.eval(x + dirn.d) - reg.eval(x)


def _diag_value(oracle, reg, pt):
    """``F`` at a point handle without charging the counters."""
    g = reg.eval(pt.x)
    if not math.isfinite(g):
        return math.inf
    h = pt if pt._ready else oracle.at(pt.x)
    return h.value() + g


def solve_newton(problem, cfg=None, direction=None, armijo_delta=None, method=None):
    """Run the two-phase proximal-Newton method.  Returns ``(x, trace)``.

    ``direction(point, warm, counters)`` may replace the default primal
    direction (it must return a :class:`SearchDirectionResult` whose
    ``warm_state`` is fed back next iteration); ``armijo_delta(point, reg,
    dirn)`` then supplies the model decrease used by backtracking.  Objective
    values stored in the trace are diagnostics and are not charged to the
    counters; only evaluations requested by a line search are.
    """
    cfg = cfg or NewtonConfig()
    oracle, reg = problem.oracle, problem.reg
    trace = SolverTrace(method=method or f"newton[{cfg.strategy}]")
    counters = trace.counters if cfg.counters_enabled else None
    if direction is None:
        def direction(point, warm, ctr):
            return newton_direction(oracle, reg, point.x, cfg, warm=warm, counters=ctr, point=point)
    armijo_delta = armijo_delta or _plain_delta
    x = problem.x0.copy()
    pt = oracle.at(x, counters)
    F_k = _diag_value(oracle, reg, pt)
    if not math.isfinite(F_k):
        raise DomainError("x0 is outside dom F")

    def count_F(point):
        # exact F at an existing handle, charged as an objective evaluation
        if counters is not None:
            counters.n_feval += 1
            before = counters.n_chol
        v = point.value() + reg.eval(point.x)
        if counters is not None:
            counters.n_chol_feval += counters.n_chol - before
        return v

    def phi(a):
        h = oracle.at(x + a * d, counters)
        if not math.isfinite(reg.eval(h.x)):
            if counters is not None:
                counters.n_feval += 1
            return math.inf, h
        return count_F(h), h

    f_exact = None
    f_upper = None
    warm = None
    entered_full = False
    prev_lam = prev_alpha = None
    t_start = time.perf_counter()
    for k in range(cfg.max_iter + 1):
        dirn = direction(pt, warm, counters)
        warm = dirn.warm_state
        lam = dirn.lam
        if prev_lam is not None and prev_alpha == 1.0 and prev_lam <= cfg.sigma:
            if lam > prev_lam ** 2 / (1 - 4 * prev_lam + 2 * prev_lam ** 2) + 1e-7:
                trace.anomalies.append(f"k={k}: full-step contraction bound violated")
            if lam > prev_lam:
                trace.anomalies.append(f"k={k}: decrement increased in the full phase")
        if lam <= cfg.eps or k == cfg.max_iter:
            trace.append(k=k, F=F_k, lam=lam, beta=lam, alpha=0.0, L=math.nan,
                         phase="stop", inner_iters=dirn.inner_iters,
                         wall_ms=1e3 * (time.perf_counter() - t_start))
            trace.status = "converged" if lam <= cfg.eps else "max_iter"
            break
        damped = lam > cfg.sigma
        if damped and entered_full:
            trace.anomalies.append(f"k={k}: re-entered damped phase (lambda={lam:.3e})")
        entered_full = entered_full or not damped
        d = dirn.d

        f_ref = delta = None
        if _needs_exact_f(cfg.strategy, lam, cfg.sigma):
            if f_exact is None:
                f_exact = count_F(pt)
            f_ref = f_exact
            delta = armijo_delta(pt, reg, dirn)
        elif cfg.strategy == "FwLS" and damped and f_upper is None:
            f_upper = f_exact = count_F(pt)
        choice = select_step(cfg.strategy, lam, phi, sigma=cfg.sigma, f_ref=f_ref,
                             f_upper=f_upper, armijo_delta=delta, cfg=cfg)
        alpha = choice.alpha
        trace.append(k=k, F=F_k, lam=lam, beta=lam, alpha=alpha, L=math.nan,
                     phase="damped" if damped else "full", inner_iters=dirn.inner_iters,
                     wall_ms=1e3 * (time.perf_counter() - t_start))
        if choice.degraded:
            trace.anomalies.append(f"k={k}: line search degraded to the analytic step")
        x_new = x + alpha * d
        pt_new = choice.point if choice.point is not None else oracle.at(x_new, counters)
        if choice.f_new is not None:
            f_exact = f_upper = choice.f_new
        else:
            f_exact = None
            if f_upper is not None:
                al = alpha * lam
                f_upper = f_upper - al * lam + omega_star(al) if al < 1 else None
        F_new = _diag_value(oracle, reg, pt_new)
        if not math.isfinite(F_new):
            raise SCompError(f"domain escape at k={k} (alpha={alpha})")
        if damped and alpha == analytic_damped_step(lam):
            if F_new > F_k - omega(lam) + 1e-8 * (1 + abs(F_k)):
                trace.anomalies.append(f"k={k}: damped descent bound violated")
        prev_lam, prev_alpha = lam, alpha
        x, pt, F_k = x_new, pt_new, F_new
    trace.extras["x"] = x
    return x, trace


def bfgs_update(H, z, y):
    """BFGS update of a Hessian approximation; satisfies ``H+ z = y``."""
    H = np.asarray(H, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    yz = float(y @ z)
    if yz <= 1e-12 * np.linalg.norm(y) * np.linalg.norm(z):
        raise CurvatureError(f"curvature condition fails: y'z = {yz:.3e}")
    Hz = H @ z
    zHz = float(z @ Hz)
    Hp = H + np.outer(y, y) / yz - np.outer(Hz, Hz) / zHz
    return 0.5 * (Hp + Hp.T)
