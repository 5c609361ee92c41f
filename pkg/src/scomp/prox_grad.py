"""Proximal-gradient method with a scalar metric and analytic step size.

At ``x_k`` the direction comes from the prox of ``g`` at ``x_k - grad/L_k``.
With ``beta^2 = L_k ||d||^2`` and ``lambda = ||d||_{x_k}`` the step

    alpha = beta^2 / (lambda (lambda + beta^2))

guarantees ``F(x+) <= F(x) - omega(beta^2/lambda)`` as long as
``lambda >= 1`` or ``lambda^2/beta^2 + lambda >= 1``; ``L_k`` is halved
until that holds.  No objective evaluations are needed.
"""

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SCompError, StepConditionFailure
from .prox_ops import ZeroReg
from .prox_newton import SearchDirectionResult
from .sc_core import omega, omega_star
from .subsolver import power_method_max_eig
from .trace import SolverTrace

L_MAX = 1e12


@dataclass
class GradConfig:
    eps: float = 1e-6
    max_iter: int = 1000
    L_min: float = 1e-8
    bb_init: bool = True
    greedy: bool = False
    max_halvings: int = 40
    relative_eps: bool = True  # ||d|| <= eps max(1, ||x||); False gives the bare test
    counters_enabled: bool = True
    record_objective: bool = True
    keep_history: bool = False
    descent_slack: float = 1e-8
    # optional rule L(point) for the first probe at each iteration (overrides BB)
    L_rule: Optional[Callable] = None

    def __post_init__(self):
        if self.L_min <= 0:
            raise ValueError("L_min must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def grad_step_size(beta, lam):
    """``min(beta^2 / (lambda (lambda + beta^2)), 1)`` for ``beta >= 0``, ``lambda > 0``."""
    if lam <= 0:
        raise ValueError("lambda must be positive (zero direction should have terminated)")
    b2 = beta * beta
    return min(b2 / (lam * (lam + b2)), 1.0)


def step_condition(lam, beta):
    """Relaxed acceptance ``lambda >= 1`` or ``lambda^2/beta^2 + lambda >= 1``."""
    if lam >= 1.0:
        return True
    if beta == 0.0:
        return True
    return lam * lam / (beta * beta) + lam >= 1.0


def _direction(pt, reg, L, workspace, counters):
    x = pt.x
    if counters is not None:
        counters.n_prox += 1
    s = reg.prox(x - pt.grad() / L, 1.0 / L, workspace)
    d = s - x
    nd = float(np.linalg.norm(d))
    beta = math.sqrt(L) * nd
    lam = pt.local_norm(d) if nd > 0 else 0.0
    return SearchDirectionResult(s=s, d=d, lam=lam, beta=beta)


def choose_Lk(oracle, reg, x_k, L_init, cfg=None, point=None, counters=None, workspace=None):
    """Halve ``L`` from ``L_init`` until the step condition holds.

    Returns ``(L_k, SearchDirectionResult)``.  Raises
    :class:`StepConditionFailure` if ``max_halvings`` are exhausted or the
    floor ``L_min`` is reached without success.
    """
    cfg = cfg or GradConfig()
    if L_init <= 0:
        raise ValueError("L_init must be positive")
    reg = reg if reg is not None else ZeroReg()
    pt = point if point is not None else oracle.at(x_k, counters)
    if not pt.in_domain:
        raise DomainError("x_k is outside dom f")
    workspace = {} if workspace is None else workspace
    L = max(float(L_init), cfg.L_min)
    for j in range(cfg.max_halvings + 1):
        dirn = _direction(pt, reg, L, workspace, counters)
        if dirn.lam == 0.0 or step_condition(dirn.lam, dirn.beta):
            return L, dirn
        if L <= cfg.L_min or j == cfg.max_halvings:
            break
        L = max(0.5 * L, cfg.L_min)
    raise StepConditionFailure(dirn.lam, dirn.beta, L)


def bb_estimate(dx, dg):
    """Barzilai-Borwein curvature ``(dg'dx)/||dx||^2``; ``None`` if not positive."""
    den = float(np.vdot(dx, dx))
    num = float(np.vdot(dg, dx))
    if den <= 0 or num <= 0:
        return None
    return num / den


def greedy_update(x_k, s_k, alpha, F_evaluator):
    """Take ``s_k`` if it is feasible and beats ``x_hat = x_k + alpha (s_k - x_k)``.

    Returns ``(x_next, F(x_next))``.
    """
    x_hat = x_k + alpha * (s_k - x_k)
    if alpha >= 1.0:
        return s_k, F_evaluator(s_k)
    f_hat = F_evaluator(x_hat)
    f_s = F_evaluator(s_k)
    if math.isfinite(f_s) and f_s < f_hat:
        return s_k, f_s
    return x_hat, f_hat


def solve_grad(problem, cfg=None):
    """Run the proximal-gradient method.  Returns ``(x, trace)``.

    ``trace.extras`` holds the ergodic average ``x_bar`` (weight
    ``alpha_j`` on the iterate ``x^j`` the step starts from), ``S`` and
    ``L_bar``; with ``keep_history`` also ``iterates``, ``directions``,
    ``Ls`` and per-step ``x_bar`` snapshots.
    """
    cfg = cfg or GradConfig()
    oracle, reg = problem.oracle, problem.reg
    trace = SolverTrace(method="grad-greedy" if cfg.greedy else "grad")
    counters = trace.counters if cfg.counters_enabled else None
    x = problem.x0.copy()
    pt = oracle.at(x, counters)
    if not pt.in_domain or not math.isfinite(reg.eval(x)):
        raise DomainError("x0 is outside dom F")
    workspace = {}

    def F_count(z):
        h = oracle.at(z, counters)
        if counters is not None:
            counters.n_feval += 1
            before = counters.n_chol
        g = reg.eval(z)
        v = h.value() + g if math.isfinite(g) else math.inf
        if counters is not None:
            counters.n_chol_feval += counters.n_chol - before
        return v, h

    if cfg.L_rule is not None:
        L_prev = cfg.L_rule(pt)
    else:
        L_prev = power_method_max_eig(pt.hess_vec, x, iters=10)
    L_prev = min(max(L_prev, cfg.L_min), L_MAX)
    x_prev = g_prev = None
    S = 0.0
    x_sum = np.zeros_like(x)
    L_bar = 0.0
    hist = {"iterates": [x.copy()], "directions": [], "Ls": [], "x_bar": []} if cfg.keep_history else None
    F_k = pt.value() + reg.eval(x)
    t_start = time.perf_counter()
    for k in range(cfg.max_iter + 1):
        L0 = L_prev
        if k > 0:
            if cfg.L_rule is not None:
                L0 = cfg.L_rule(pt)
            elif cfg.bb_init:
                bb = bb_estimate(x - x_prev, pt.grad() - g_prev)
                if bb is not None:
                    L0 = bb
        L0 = min(max(L0, cfg.L_min), L_MAX)
        L, dirn = choose_Lk(oracle, reg, x, L0, cfg, point=pt, counters=counters, workspace=workspace)
        nd = float(np.linalg.norm(dirn.d))
        tol = cfg.eps * max(1.0, float(np.linalg.norm(x))) if cfg.relative_eps else cfg.eps
        if nd <= tol or dirn.lam == 0.0 or k == cfg.max_iter:
            trace.append(k=k, F=F_k, lam=dirn.lam, beta=dirn.beta, alpha=0.0, L=L, phase="stop",
                         wall_ms=1e3 * (time.perf_counter() - t_start))
            trace.status = "converged" if (nd <= tol or dirn.lam == 0.0) else "max_iter"
            break
        lam, beta = dirn.lam, dirn.beta
        alpha = grad_step_size(beta, lam)
        if alpha * lam >= 1.0:
            raise SCompError(f"step leaves the Dikin ellipsoid at k={k}")
        trace.append(k=k, F=F_k, lam=lam, beta=beta, alpha=alpha, L=L,
                     wall_ms=1e3 * (time.perf_counter() - t_start))
        if cfg.greedy:
            cache = {}

            def F_eval(z):
                v, h = F_count(z)
                cache[id(z)] = h
                return v

            x_new, F_new = greedy_update(x, dirn.s, alpha, F_eval)
            pt_new = cache[id(x_new)]
        else:
            x_new = x + alpha * dirn.d
            pt_new = oracle.at(x_new, counters)
            F_new = pt_new.value() + reg.eval(x_new) if cfg.record_objective else math.nan
        if not pt_new.in_domain:
            raise SCompError(f"domain escape at k={k}")
        if cfg.record_objective:
            bound = F_k - omega(beta * beta / lam)
            if F_new > bound + cfg.descent_slack * (1.0 + abs(F_k)):
                trace.anomalies.append(
                    f"k={k}: descent bound violated by {F_new - bound:.3e}")
        S += alpha
        x_sum += alpha * x
        L_bar = max(L_bar, L)
        if hist is not None:
            hist["iterates"].append(x_new.copy())
            hist["directions"].append(dirn.d.copy())
            hist["Ls"].append(L)
            hist["x_bar"].append(x_sum / S)
        x_prev, g_prev = x, pt.grad()
        x, pt, F_k, L_prev = x_new, pt_new, F_new, L
    trace.extras.update(x=x, x_bar=(x_sum / S if S > 0 else x.copy()), S=S, L_bar=L_bar)
    if hist is not None:
        trace.extras.update(hist)
    return x, trace


def guaranteed_decrease(beta, lam):
    """``alpha beta^2 - omega_star(alpha lambda)`` at the analytic step (equals ``omega(beta^2/lambda)``)."""
    a = grad_step_size(beta, lam)
    return a * beta * beta - omega_star(a * lam)


def local_linear_diagnostic(trace, oracle, x_star, last=None):
    """Restricted approximation gap and contraction ratios near ``x_star``.

    Needs a trace from ``solve_grad`` with ``keep_history``.  For each step
    ``c_res = ||(L I - H*) d||*_{x*} / ||d||_{x*}`` with ``H*`` the Hessian
    at ``x_star``; the contraction ratio is
    ``||x^{k+1} - x*||_{x*} / ||x^k - x*||_{x*}``.
    """
    its = trace.extras.get("iterates")
    if its is None:
        raise ValueError("trace has no iterate history (run with keep_history=True)")
    dirs, Ls = trace.extras["directions"], trace.extras["Ls"]
    ps = oracle.at(x_star)
    idx = range(len(dirs)) if last is None else range(max(0, len(dirs) - last), len(dirs))
    c_res, ratios = [], []
    for j in idx:
        d = dirs[j]
        nd = ps.local_norm(d)
        if nd > 0:
            c_res.append(ps.dual_local_norm(Ls[j] * d - ps.hess_vec(d)) / nd)
        e0 = ps.local_norm(its[j] - x_star)
        e1 = ps.local_norm(its[j + 1] - x_star)
        if e0 > 0:
            ratios.append(e1 / e0)
    c = np.array(c_res)
    return {
        "c_res": c,
        "median_c_res": float(np.median(c)) if c.size else math.nan,
        "contraction": np.array(ratios),
    }
