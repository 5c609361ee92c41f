"""Poisson deblurring with TV: plain vs greedy proximal gradient."""
import argparse

from scomp.apps import poisson_solve, synth_poisson
from scomp.prox_grad import GradConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--intensity", type=float, default=1e3)
    ap.add_argument("--eps", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    prob = synth_poisson(size=args.size, intensity=args.intensity, seed=args.seed)
    for greedy in (False, True):
        x, tr = poisson_solve(prob, GradConfig(eps=args.eps, max_iter=5000, greedy=greedy))
        err = float(((x.ravel() - prob.x_true.ravel()) ** 2).mean()) ** 0.5
        print(f"{tr.method:>10} status={tr.status} iter={tr.iterations} F={tr.records[-1].F:.6f} "
              f"residual={tr.extras['residual']:.2e} feval={tr.counters.n_feval} rmse={err:.4f}")


if __name__ == "__main__":
    main()
