"""Acceptance suite: one test per criterion, each recorded for the terminal summary."""

import math

import numpy as np

from _helpers import brute_force_l1_qp, oracle_suite, rand_dir, rand_spd, record
from scomp.apps import (GraphProblem, dpngs_solve, hetlasso_solve, poisson_solve, proxgrad_graph_solve,
                        synth_gmrf, synth_hetlasso, synth_poisson)
from scomp.prox_grad import GradConfig
from scomp.prox_newton import NewtonConfig, bfgs_update, solve_newton
from scomp.prox_ops import L1Reg, TVNonnegReg, ZeroReg
from scomp.sc_core import LogDetOracle, omega, omega_star
from scomp.subsolver import MetricOperator, solve_dual_graph, solve_primal_fista

SEEDS = range(10)
REF_CFG = NewtonConfig(eps=1e-12, inner_tol=1e-12, inner_max_iter=20000)


def _suite():
    return [synth_gmrf(p=10, rho=0.01, seed=s) for s in SEEDS]


def _reference(prob):
    x, tr = dpngs_solve(prob, REF_CFG)
    assert tr.converged
    return x, tr.records[-1].F


def _newton_runs(cfg):
    out = []
    for prob in _suite():
        out.append((prob, "dpngs", dpngs_solve(prob, cfg)[1]))
        out.append((prob, "newton", solve_newton(prob.instance(), cfg)[1]))
    return out


def test_criterion_01_damped_descent():
    worst = -math.inf
    count = 0
    for _, _, tr in _newton_runs(NewtonConfig(eps=1e-6)):
        R = tr.records
        for a, b in zip(R, R[1:]):
            if a.phase != "damped":
                continue
            count += 1
            worst = max(worst, (b.F - (a.F - omega(a.lam))) / (1 + abs(a.F)))
    ok = count > 0 and worst <= 1e-8
    record(1, ok, f"{count} damped steps, worst slack {worst:.2e} (<= 1e-8)")
    assert ok


def test_criterion_02_quadratic_phase_and_bound():
    eps = 1e-6
    worst, excess, n_full = -math.inf, -math.inf, 0
    for prob, _, tr in _newton_runs(NewtonConfig(sigma=0.2, eps=eps)):
        assert tr.converged
        R = tr.records
        start = next((i for i, r in enumerate(R) if r.lam <= 0.2 and r.alpha == 1.0), None)
        if start is not None:
            for a, b in zip(R[start:], R[start + 1:]):
                n_full += 1
                worst = max(worst, b.lam - (3.57 * a.lam ** 2 + 1e-7))
        inst = prob.instance()
        _, F_star = _reference(prob)
        F0 = inst.objective(inst.x0)
        bound = math.floor((F0 - F_star) / 0.017) + math.floor(1.5 * math.log(math.log(0.28 / eps))) + 2
        excess = max(excess, tr.iterations - bound)
    ok = n_full > 0 and worst <= 0 and excess <= 0
    record(2, ok, f"{n_full} full steps, worst contraction excess {worst:.2e}; "
                  f"max(iter - bound) = {excess}")
    assert ok


def _lemma4_worst(tr):
    worst = -math.inf
    R = tr.records
    for a, b in zip(R, R[1:]):
        worst = max(worst, (b.F - (a.F - omega(a.beta ** 2 / a.lam))) / (1 + abs(a.F)))
    return worst


def test_criterion_03_grad_descent():
    worst, steps, anomalies = -math.inf, 0, []
    traces = [proxgrad_graph_solve(prob, GradConfig(eps=1e-6, max_iter=5000))[1] for prob in _suite()]
    traces.append(hetlasso_solve(synth_hetlasso(n=100, p=300, seed=0), GradConfig(eps=1e-6, max_iter=5000))[1])
    for tr in traces:
        worst = max(worst, _lemma4_worst(tr))
        steps += tr.iterations
        anomalies += tr.anomalies
    ok = worst <= 1e-8 and not anomalies
    record(3, ok, f"{steps} steps (graph + het-LASSO), worst relative slack {worst:.2e}")
    assert ok


def _sc_checks(orc, x, y):
    """Relative violations of the lower/upper model bounds and the Hessian sandwich."""
    px = orc.at(x)
    d = y - x
    r = px.local_norm(d)
    lin = px.value() + float(np.vdot(px.grad(), d))
    fy = orc.value_at(y)
    scale = 1 + abs(fy)
    v_lo = (lin + omega(r) - fy) / scale
    v_hi = (fy - lin - omega_star(r)) / scale
    # generalized eigenvalues of (H(y), H(x)) must lie in [(1-r)^2, (1-r)^-2]
    Hx, Hy = orc.hessian_matrix(x), orc.hessian_matrix(y)
    C = np.linalg.cholesky(0.5 * (Hx + Hx.T))
    Ci = np.linalg.inv(C)
    ev = np.linalg.eigvalsh(Ci @ (0.5 * (Hy + Hy.T)) @ Ci.T)
    lo, hi = (1 - r) ** 2, (1 - r) ** -2
    v_sw = max((lo - ev[0]) / lo, (ev[-1] - hi) / hi)
    return max(v_lo, v_hi), v_sw


def test_criterion_04_self_concordance():
    rng = np.random.default_rng(4)
    worst_model = worst_sw = worst_fd = -math.inf
    for name, orc, sample in oracle_suite(0):
        for _ in range(1000):
            x = sample(rng)
            v = rand_dir(rng, x)
            v /= orc.at(x).local_norm(v)
            y = x + rng.uniform(0.0, 0.99) * v
            m, s = _sc_checks(orc, x, y)
            worst_model, worst_sw = max(worst_model, m), max(worst_sw, s)
        for _ in range(50):
            x = sample(rng)
            v = rand_dir(rng, x)
            h = 1e-5 * (1 + np.linalg.norm(x))
            g = float(np.vdot(orc.grad_at(x), v))
            fd = (orc.value_at(x + h * v) - orc.value_at(x - h * v)) / (2 * h)
            hv = orc.hess_vec_at(x, v)
            fdh = (orc.grad_at(x + h * v) - orc.grad_at(x - h * v)) / (2 * h)
            worst_fd = max(worst_fd, abs(fd - g) / max(abs(g), 1.0),
                           np.linalg.norm(fdh - hv) / max(np.linalg.norm(hv), 1.0))
    ok = worst_model <= 1e-8 and worst_sw <= 1e-8 and worst_fd <= 1e-5
    record(4, ok, f"4 oracles x 1000 pairs: model {worst_model:.2e}, sandwich {worst_sw:.2e}, "
                  f"finite differences {worst_fd:.2e}")
    assert ok


def test_criterion_05_nonexpansive():
    rng = np.random.default_rng(5)
    regs = [
        ("zero", ZeroReg()),
        ("l1", L1Reg(0.8)),
        ("l1-masked", L1Reg(0.8, mask=np.array([False] * 5 + [True]))),
        ("tv-nonneg", TVNonnegReg(0.4, 3, 2, inner_tol=1e-14, inner_max_iter=200000)),
    ]
    worst_ip = worst_norm = -math.inf
    for _, reg in regs:
        for _ in range(1000):
            d = rng.uniform(0.2, 5.0, 6)
            u, v = 3 * rng.standard_normal(6), 3 * rng.standard_normal(6)
            dp, du = reg.prox_diag(u, d) - reg.prox_diag(v, d), u - v
            h2 = float(np.sum(d * dp * dp))
            worst_ip = max(worst_ip, h2 - float(du @ dp))
            worst_norm = max(worst_norm, math.sqrt(h2) - math.sqrt(float(np.sum(du * du / d))))
    ok = worst_ip <= 1e-10 and worst_norm <= 1e-10
    record(5, ok, f"4 regularizers x 1000 triples: inner-product {worst_ip:.2e}, norm {worst_norm:.2e}")
    assert ok


def test_criterion_06_kkt():
    rng = np.random.default_rng(6)
    p = 5
    A = rng.standard_normal((50, p))
    S = A.T @ A / 50
    rho = float(np.max(np.abs(S - np.diag(np.diag(S))))) + 0.02
    # the default start is already diagonal-optimal, so start away from it
    prob = GraphProblem(S, rho, theta0=2 * np.eye(p))
    cfg = NewtonConfig(eps=1e-8, inner_tol=1e-12, inner_max_iter=20000)
    x, _ = solve_newton(prob.instance(), cfg)
    err_diag = float(np.max(np.abs(x - np.diag(1 / (np.diag(S) + rho)))))
    worst_kkt = 0.0
    for seed in range(5):
        gp = synth_gmrf(p=5, rho=[0.01, 0.05, 0.1, 0.2, 0.3][seed], seed=seed)
        xg, tr = solve_newton(gp.instance(), cfg)
        assert tr.converged
        worst_kkt = max(worst_kkt, gp.kkt_residual(xg))
    ok = err_diag <= 1e-6 and worst_kkt <= 1e-6
    record(6, ok, f"diagonal solution error {err_diag:.2e}, worst KKT residual {worst_kkt:.2e}")
    assert ok


def test_criterion_07_dual_primal():
    worst, loop_chol = 0.0, 0
    for prob in _suite():
        S, rho = prob.sigma_hat, prob.rho
        # the start and one damped iterate
        thetas = [prob.theta0]
        _, dual0 = solve_dual_graph(prob.theta0, S, rho, tol=1e-12, max_iter=20000)
        thetas.append(prob.theta0 + 0.5 * dual0.d / (1 + np.linalg.norm(dual0.d)))
        for T in thetas:
            _, dual = solve_dual_graph(T, S, rho, tol=1e-12, max_iter=20000)
            pt = LogDetOracle(S).at(T)
            prim = solve_primal_fista(MetricOperator(pt.hess_vec, template=T), pt.grad(), T, L1Reg(rho),
                                      tol=1e-12, max_iter=20000)
            worst = max(worst, float(np.linalg.norm(dual.d - prim.d)))
        _, tr = dpngs_solve(prob, NewtonConfig(eps=1e-8, inner_tol=1e-12, inner_max_iter=20000))
        loop_chol += tr.counters.n_chol_loop
    ok = worst <= 1e-5 and loop_chol == 0
    record(7, ok, f"max direction gap {worst:.2e} (<= 1e-5), DPNGS loop Cholesky {loop_chol}")
    assert ok


def test_criterion_08_brute_force_subproblem():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n = 6
        H = rand_spd(rng, n, rng.uniform(2.0, 50.0))
        grad, xk = rng.standard_normal(n), rng.standard_normal(n)
        rho = rng.uniform(0.1, 2.0)
        res = solve_primal_fista(MetricOperator(lambda v, H=H: H @ v, template=xk), grad, xk, L1Reg(rho),
                                 tol=1e-13, max_iter=50000)
        ref = brute_force_l1_qp(H, grad - H @ xk, rho)
        worst = max(worst, float(np.max(np.abs(res.s - ref))))
    ok = worst <= 1e-6
    record(8, ok, f"100 instances, max deviation from enumeration {worst:.2e}")
    assert ok


def test_criterion_09_bfgs():
    rng = np.random.default_rng(9)
    worst_sec, min_eig = 0.0, math.inf
    for _ in range(100):
        H = rand_spd(rng, 6, rng.uniform(2.0, 100.0))
        z, y = rng.standard_normal(6), rng.standard_normal(6)
        if y @ z <= 0:
            y = -y
        Hp = bfgs_update(H, z, y)
        worst_sec = max(worst_sec, np.linalg.norm(Hp @ z - y) / np.linalg.norm(y))
        min_eig = min(min_eig, np.linalg.eigvalsh(Hp)[0])
    ok = worst_sec <= 1e-12 and min_eig > 0
    record(9, ok, f"100 updates, secant residual {worst_sec:.2e}, min eigenvalue {min_eig:.2e}")
    assert ok


def test_criterion_10_ergodic_bound():
    worst = -math.inf
    steps = 0
    for seed in range(3):
        prob = synth_gmrf(p=5, rho=0.05, seed=seed)
        x_star, F_star = _reference(prob)
        _, tr = proxgrad_graph_solve(prob, GradConfig(eps=1e-8, max_iter=5000, keep_history=True))
        r0 = float(np.linalg.norm(prob.theta0 - x_star)) ** 2
        inst = prob.instance()
        S, L_bar = 0.0, 0.0
        for rec, L, xb in zip(tr.records, tr.extras["Ls"], tr.extras["x_bar"]):
            S += rec.alpha
            L_bar = max(L_bar, L)
            gap = inst.objective(xb) - F_star
            worst = max(worst, gap - L_bar * r0 / (2 * S))
            steps += 1
    ok = steps > 0 and worst <= 1e-12
    record(10, ok, f"{steps} steps on 3 p=5 instances, max(gap - bound) {worst:.2e}")
    assert ok


def test_criterion_11_linesearch_trend():
    stats = {}
    for strategy in ("NoLS", "BtkLS", "FwLS"):
        chol, iters, fev = [], [], []
        for prob in _suite():
            _, tr = dpngs_solve(prob, NewtonConfig(eps=1e-6, strategy=strategy))
            assert tr.converged
            chol.append(tr.counters.n_chol)
            iters.append(tr.iterations)
            fev.append(tr.counters.n_feval)
        stats[strategy] = (np.mean(chol), np.mean(iters), max(fev))
    ok = (stats["FwLS"][0] <= stats["BtkLS"][0] and stats["FwLS"][1] <= stats["NoLS"][1]
          and stats["NoLS"][2] == 0)
    detail = ", ".join(f"{k}: chol {v[0]:.1f} iter {v[1]:.1f}" for k, v in stats.items())
    record(11, ok, f"{detail}; NoLS max feval {stats['NoLS'][2]}")
    assert ok


def _monotone(tr):
    F = tr.column("F")
    return all(b <= a + 1e-6 * (1 + abs(a)) for a, b in zip(F, F[1:]))


def test_criterion_12_poisson():
    prob = synth_poisson(size=32, rho=2.5e-5, seed=0)
    _, plain = poisson_solve(prob, GradConfig(eps=1e-4, max_iter=5000))
    _, greedy = poisson_solve(prob, GradConfig(eps=1e-4, max_iter=5000, greedy=True))
    res = max(plain.extras["residual"], greedy.extras["residual"])
    mono = _monotone(plain) and _monotone(greedy)
    # equal budget: both run exactly 300 iterations
    budget = 300
    _, bp = poisson_solve(prob, GradConfig(eps=1e-12, max_iter=budget))
    _, bg = poisson_solve(prob, GradConfig(eps=1e-12, max_iter=budget, greedy=True))
    same = bp.iterations == bg.iterations == budget
    Fp, Fg = bp.records[-1].F, bg.records[-1].F
    ok = mono and _monotone(bp) and _monotone(bg) and res <= 1e-4 and same and Fg <= Fp
    record(12, ok, f"residual {res:.2e} (iters {plain.iterations}/{greedy.iterations}), monotone {mono}; "
                   f"F after {budget}: greedy {Fg:.6f} vs plain {Fp:.6f}")
    assert ok
