"""Line-search strategies for dual proximal-Newton on synthetic graph selection.

Prints mean iterations, Cholesky counts and function evaluations per strategy.
"""
import argparse

import numpy as np

from scomp.apps import dpngs_solve, synth_gmrf
from scomp.prox_newton import STRATEGIES, NewtonConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--rho", type=float, default=0.01)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--eps", type=float, default=1e-8)
    args = ap.parse_args()

    print(f"{'strategy':>8} {'iter':>7} {'chol':>7} {'loop':>6} {'feval':>7} {'ms':>9}")
    for strat in STRATEGIES:
        rows = []
        for seed in range(args.seeds):
            prob = synth_gmrf(p=args.p, seed=seed, rho=args.rho)
            _, tr = dpngs_solve(prob, NewtonConfig(eps=args.eps, strategy=strat))
            c = tr.counters
            rows.append((tr.iterations, c.n_chol, c.n_chol_loop, c.n_feval, tr.records[-1].wall_ms))
        m = np.mean(rows, axis=0)
        print(f"{strat:>8} {m[0]:7.2f} {m[1]:7.2f} {m[2]:6.2f} {m[3]:7.2f} {m[4]:9.2f}")


if __name__ == "__main__":
    main()
