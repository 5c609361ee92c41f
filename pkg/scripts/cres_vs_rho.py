"""Local approximation gap of the proximal-gradient metric against rho.

For each rho, solves graph selection with proximal gradient, then measures
the median restricted gap c_res and the median contraction ratio over the
tail of the run.  Sparser solutions (larger rho) should show smaller gaps.
"""
import argparse

import numpy as np

from scomp.apps import GraphProblem, dpngs_solve, proxgrad_graph_solve, synth_gmrf
from scomp.prox_grad import GradConfig, local_linear_diagnostic
from scomp.prox_newton import NewtonConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--last", type=int, default=20)
    args = ap.parse_args()

    print(f"{'rho':>8} {'c_res':>9} {'contr':>8} {'iter':>7}")
    for rho in (0.005, 0.01, 0.05, 0.1, 0.2):
        cs, rs, its = [], [], []
        for seed in range(args.seeds):
            base = synth_gmrf(p=args.p, seed=seed)
            prob = GraphProblem(base.sigma_hat, rho)
            x_star, _ = dpngs_solve(prob, NewtonConfig(eps=1e-12, inner_tol=1e-12, inner_max_iter=5000))
            cfg = GradConfig(eps=1e-8, max_iter=5000, keep_history=True)
            _, tr = proxgrad_graph_solve(prob, cfg)
            rep = local_linear_diagnostic(tr, prob.instance().oracle, x_star, last=args.last)
            cs.append(rep["median_c_res"])
            if rep["contraction"].size:
                rs.append(np.median(rep["contraction"]))
            its.append(tr.iterations)
        print(f"{rho:8.3f} {np.median(cs):9.4f} {np.median(rs):8.4f} {np.mean(its):7.1f}")


if __name__ == "__main__":
    main()
