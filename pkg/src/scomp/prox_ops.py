"""Nonsmooth regularizers and their proximal maps under diagonal metrics.

Public ``prox_diag`` methods use the metric convention

    P(u) = argmin_x { g(x) + 1/2 x' diag(d) x - u' x },

which equals the usual prox of ``g`` with weights ``1/d`` evaluated at
``u / d``.  ``prox`` is the conventional form ``argmin g(x) + ||x - z||^2/(2t)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SubsolverFailure


def prox_l1(u, tau, rho, mask=None):
    """Soft-thresholding ``sign(u) max(|u| - rho*tau, 0)``; masked entries pass through."""
    u = np.asarray(u, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), u.shape)
    if np.any(tau <= 0):
        raise DomainError("tau must be positive")
    out = np.sign(u) * np.maximum(np.abs(u) - rho * tau, 0.0)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), u.shape)
        out = np.where(mask, u, out)
    return out


class Regularizer:
    separable = True

    def eval(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.eval(x)

    def prox_diag(self, u, d, workspace=None):
        raise NotImplementedError

    def prox(self, z, t, workspace=None):
        t = np.asarray(t, dtype=float)
        return self.prox_diag(np.asarray(z, dtype=float) / t, 1.0 / t, workspace)


class ZeroReg(Regularizer):
    """``g = 0``."""

    def eval(self, x):
        return 0.0

    def prox_diag(self, u, d, workspace=None):
        return np.asarray(u, dtype=float) / d

    def kkt_residual(self, x, grad):
        return float(np.max(np.abs(grad)))


class L1Reg(Regularizer):
    """``rho * ||x||_1`` over the entries not flagged in ``mask``."""

    def __init__(self, rho, mask=None):
        if rho < 0:
            raise DomainError("rho must be nonnegative")
        self.rho = float(rho)
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)

    def _weights(self, x):
        if self.mask is None:
            return None
        return ~np.broadcast_to(self.mask, np.shape(x))

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        w = self._weights(x)
        a = np.abs(x) if w is None else np.abs(x[w])
        return self.rho * float(np.sum(a))

    def prox_diag(self, u, d, workspace=None):
        u = np.asarray(u, dtype=float)
        d = np.broadcast_to(np.asarray(d, dtype=float), u.shape)
        if np.any(d <= 0):
            raise DomainError("metric weights must be positive")
        return prox_l1(u / d, 1.0 / d, self.rho, self.mask)

    def subgrad_closest(self, x, grad):
        """Element ``v`` of the subdifferential at ``x`` minimizing ``|grad + v|``."""
        x = np.asarray(x, dtype=float)
        v = np.where(x != 0, self.rho * np.sign(x), np.clip(-grad, -self.rho, self.rho))
        if self.mask is not None:
            v = np.where(np.broadcast_to(self.mask, x.shape), 0.0, v)
        return v

    def kkt_residual(self, x, grad):
        """``min_{v in dg(x)} max_i |grad_i + v_i|``."""
        return float(np.max(np.abs(grad + self.subgrad_closest(x, grad))))


@dataclass
class TVControls:
    inner_tol: float = 1e-6
    inner_max_iter: int = 200


def _grad2(x):
    """Anisotropic forward differences with replicate (Neumann) boundary."""
    return np.diff(x, axis=1), np.diff(x, axis=0)


def _grad2_adj(ph, pv):
    """Adjoint of :func:`_grad2`."""
    h, w1 = ph.shape
    w = w1 + 1
    out = np.zeros((h, w))
    out[:, :-1] -= ph
    out[:, 1:] += ph
    out[:-1, :] -= pv
    out[1:, :] += pv
    return out


def tv_norm(img):
    gh, gv = _grad2(img)
    return float(np.abs(gh).sum() + np.abs(gv).sum())


@dataclass
class TVInfo:
    iters: int
    gap: float
    rel_gap: float
    dual: tuple


def _tv_prox(w, rho, d, ctrl, dual0=None):
    """Solve ``min_{x>=0} 1/2 sum d (x - w)^2 + rho ||Dx||_1`` by dual FGP.

    ``w`` and ``d`` are 2-D arrays (``d`` may be a scalar).  Returns
    ``(x, TVInfo)``.  The stopping metric is the duality gap relative to
    ``max(1, primal)``.
    """
    h, wd = w.shape
    d = np.broadcast_to(np.asarray(d, dtype=float), w.shape)
    if rho <= 0:
        return np.maximum(w, 0.0), TVInfo(0, 0.0, 0.0, None)
    dmin = float(d.min())
    step = dmin / (8.0 * rho)  # 1/L for the dual, ||D||^2 <= 8
    if dual0 is not None and dual0[0].shape == (h, wd - 1) and dual0[1].shape == (h - 1, wd):
        ph, pv = dual0[0].copy(), dual0[1].copy()
    else:
        ph, pv = np.zeros((h, wd - 1)), np.zeros((h - 1, wd))

    def primal_of(qh, qv):
        return np.maximum(w - rho * _grad2_adj(qh, qv) / d, 0.0)

    def dual_val(x, gh, gv, qh, qv):
        return 0.5 * float(np.sum(d * (x - w) ** 2)) + rho * (float(np.vdot(qh, gh)) + float(np.vdot(qv, gv)))

    x = primal_of(ph, pv)
    gh, gv = _grad2(x)
    hval = dual_val(x, gh, gv, ph, pv)
    qh, qv = ph, pv
    t = 1.0
    gap = rel = math.inf
    it = 0
    for it in range(1, ctrl.inner_max_iter + 1):
        if qh is ph:
            xq, gqh, gqv = x, gh, gv
        else:
            xq = primal_of(qh, qv)
            gqh, gqv = _grad2(xq)
        nh = np.clip(qh + step * gqh, -1.0, 1.0)
        nv = np.clip(qv + step * gqv, -1.0, 1.0)
        xn = primal_of(nh, nv)
        gnh, gnv = _grad2(xn)
        tv = float(np.abs(gnh).sum() + np.abs(gnv).sum())
        # gap terms |a| - p a are each >= 0, so the sum stays accurate when small
        gap = rho * float(np.sum(np.abs(gnh) - nh * gnh) + np.sum(np.abs(gnv) - nv * gnv))
        primal = 0.5 * float(np.sum(d * (xn - w) ** 2)) + rho * tv
        rel = gap / max(1.0, abs(primal))
        hn = primal - gap
        if hn < hval:
            # adaptive restart on dual decrease
            t = 1.0
            qh, qv = nh, nv
        else:
            tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / tn
            qh = nh + beta * (nh - ph)
            qv = nv + beta * (nv - pv)
            t = tn
        ph, pv, x, gh, gv, hval = nh, nv, xn, gnh, gnv, hn
        if rel <= ctrl.inner_tol:
            break
    if rel > ctrl.inner_tol and rel > 10.0 * ctrl.inner_tol:
        raise SubsolverFailure(rel, it, f"TV prox stalled: relative gap {rel:.3e} after {it} iterations")
    return x, TVInfo(it, gap, rel, (ph, pv))


def prox_tv_nonneg(w, rho_k, ctrl=None, shape=None, dual0=None):
    """``argmin_{x >= 0} 1/2 ||x - w||^2 + rho_k ||Dx||_1`` (anisotropic TV)."""
    ctrl = ctrl or TVControls()
    w = np.asarray(w, dtype=float)
    img = w.reshape(shape) if shape is not None else w
    if img.ndim == 1:
        img = img.reshape(-1, 1)
    x, _ = _tv_prox(img, float(rho_k), 1.0, ctrl, dual0)
    return x.reshape(w.shape)


class TVNonnegReg(Regularizer):
    """``rho * ||D x||_1 + indicator(x >= 0)`` on a ``height x width`` image."""

    separable = False

    def __init__(self, rho, height, width, inner_tol=1e-6, inner_max_iter=200):
        if rho < 0:
            raise DomainError("rho must be nonnegative")
        self.rho = float(rho)
        self.height, self.width = int(height), int(width)
        self.ctrl = TVControls(inner_tol, inner_max_iter)

    def eval(self, x):
        img = np.asarray(x, dtype=float).reshape(self.height, self.width)
        if np.any(img < 0):
            return math.inf
        return self.rho * tv_norm(img)

    def prox_diag(self, u, d, workspace=None):
        u = np.asarray(u, dtype=float)
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise DomainError("metric weights must be positive")
        shp = (self.height, self.width)
        w = (u / d).reshape(shp)
        dual0 = workspace.get("tv_dual") if workspace is not None else None
        if d.ndim == 0 or d.size == 1:
            # uniform metric: plain TV prox with rho / d
            x, info = _tv_prox(w, self.rho / float(d.ravel()[0]), 1.0, self.ctrl, dual0)
        else:
            x, info = _tv_prox(w, self.rho, np.broadcast_to(d, u.shape).reshape(shp), self.ctrl, dual0)
        if workspace is not None:
            workspace["tv_dual"] = info.dual
            workspace["tv_iters"] = workspace.get("tv_iters", 0) + info.iters
            workspace["tv_last_gap"] = info.rel_gap
        return x.reshape(u.shape)


def eval_g(reg, x):
    """``g(x)``, possibly ``+inf``."""
    if reg is None:
        return 0.0
    return reg.eval(x)
