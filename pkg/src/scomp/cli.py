"""``scomp`` command-line driver.

    scomp solve       --problem graphlasso --method dpngs --synthetic p=10,density=0.2,seed=7
    scomp compare-ls  --strategies NoLS,BtkLS,E-BtkLS,FwLS --seeds 0-9 --out table.csv
    scomp compare-sub --seeds 0-4 --out sub.csv
    scomp export      --input trace.json --format csv --out trace.csv

Exit codes: 0 converged / success, 2 iteration limit reached, 1 error.
Errors print one line ``error reason=<tag> detail=<text>`` to stderr.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import apps
from .errors import SCompError
from .prox_grad import GradConfig, solve_grad
from .prox_newton import STRATEGIES, NewtonConfig, solve_newton
from .trace import SolverTrace, dump_json, records_from_csv, records_to_csv

PROBLEMS = ("graphlasso", "poisson", "hetlasso")
METHODS = ("newton", "grad", "dpngs", "proxgrad1", "proxgrad2", "proxgrad2g", "hetlasso")
VALID = {
    "graphlasso": ("newton", "grad", "dpngs", "proxgrad1"),
    "poisson": ("grad", "proxgrad2", "proxgrad2g"),
    "hetlasso": ("newton", "grad", "hetlasso"),
}
NEWTON_METHODS = ("newton", "dpngs")
SYNTH_KEYS = {
    "graphlasso": {"p": int, "density": float, "n_samples": int, "seed": int, "cond": float},
    "poisson": {"size": int, "intensity": float, "seed": int, "blur": str},
    "hetlasso": {"n": int, "p": int, "k": int, "noise": float, "seed": int},
}
DEFAULT_RHO = {"graphlasso": 0.01, "poisson": 2.5e-5, "hetlasso": None}


class CLIError(Exception):
    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


@dataclass
class RunSpec:
    problem: str = "graphlasso"
    method: str = "dpngs"
    strategy: str = "NoLS"
    rho: float = None
    eps: float = 1e-6
    max_iter: int = 1000
    input: str = None
    synthetic: dict = field(default_factory=dict)
    seed: int = None
    out: str = None

    def validate(self):
        """Return every problem with the spec (empty list if valid)."""
        errs = []
        if self.problem not in PROBLEMS:
            errs.append(f"unknown problem {self.problem!r} (choose from {', '.join(PROBLEMS)})")
        if self.method not in METHODS:
            errs.append(f"unknown method {self.method!r} (choose from {', '.join(METHODS)})")
        if self.problem in VALID and self.method in METHODS and self.method not in VALID[self.problem]:
            errs.append(f"method {self.method!r} does not apply to {self.problem!r} "
                        f"(valid: {', '.join(VALID[self.problem])})")
        if self.strategy not in STRATEGIES:
            errs.append(f"unknown strategy {self.strategy!r} (choose from {', '.join(STRATEGIES)})")
        elif self.strategy != "NoLS" and self.method not in NEWTON_METHODS:
            errs.append(f"strategy {self.strategy!r} only applies to methods {', '.join(NEWTON_METHODS)}")
        if self.rho is not None and self.rho < 0:
            errs.append("rho must be nonnegative")
        if self.method == "dpngs" and self.rho is not None and self.rho <= 0:
            errs.append("dpngs needs rho > 0")
        if not self.eps > 0:
            errs.append("eps must be positive")
        if self.method in NEWTON_METHODS and self.eps >= 0.2:
            errs.append("eps must be below the phase-switch radius 0.2")
        if self.max_iter < 0:
            errs.append("max-iter must be nonnegative")
        if self.input and self.synthetic:
            errs.append("give either --input or --synthetic, not both")
        keys = SYNTH_KEYS.get(self.problem, {})
        for k in self.synthetic:
            if k not in keys:
                errs.append(f"unknown synthetic key {k!r} for {self.problem} (valid: {', '.join(keys)})")
        return errs


def parse_kv(text):
    """``"p=10,density=0.2"`` to a dict of strings."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise CLIError("bad-synthetic", f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_seeds(text):
    """``"0-9"`` or ``"1,4,7"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def _typed_synth(problem, raw):
    keys = SYNTH_KEYS[problem]
    out = {}
    for k, v in raw.items():
        try:
            out[k] = keys[k](v)
        except ValueError:
            raise CLIError("bad-synthetic", f"{k}={v!r} is not a valid {keys[k].__name__}")
    return out


def build_problem(spec):
    rho = spec.rho if spec.rho is not None else DEFAULT_RHO[spec.problem]
    if spec.input:
        path = Path(spec.input)
        if not path.exists():
            raise CLIError("input-not-found", str(path))
        try:
            if spec.problem == "graphlasso":
                return apps.graph_from_file(path, rho)
            if spec.problem == "poisson":
                return apps.poisson_from_pgm(path, rho=rho, seed=spec.seed or 0)
            X, y = apps.read_xy_csv(path)
            if rho is None:
                rho = math.sqrt(2.0 * math.log(X.shape[1]) / X.shape[0])
            return apps.HetLassoProblem(X, y, rho)
        except (OSError, ValueError) as exc:
            raise CLIError("bad-input", f"{path}: {exc}")
    kw = _typed_synth(spec.problem, spec.synthetic)
    if spec.seed is not None:
        kw["seed"] = spec.seed
    if spec.problem == "graphlasso":
        return apps.synth_gmrf(rho=rho, **kw)
    if spec.problem == "poisson":
        if kw.get("blur") in ("none", "identity"):
            kw["blur"] = None
        return apps.synth_poisson(rho=rho, **kw)
    return apps.synth_hetlasso(rho=rho, **kw)


def run(spec, prob=None):
    """Solve one instance.  Returns ``(x, trace)``."""
    prob = prob if prob is not None else build_problem(spec)
    m = spec.method
    if m in NEWTON_METHODS:
        cfg = NewtonConfig(eps=spec.eps, max_iter=spec.max_iter, strategy=spec.strategy)
        if m == "dpngs":
            return apps.dpngs_solve(prob, cfg)
        return solve_newton(prob.instance(), cfg)
    cfg = GradConfig(eps=spec.eps, max_iter=spec.max_iter)
    if m == "proxgrad1":
        return apps.proxgrad_graph_solve(prob, cfg)
    if m in ("proxgrad2", "proxgrad2g"):
        cfg.greedy = m == "proxgrad2g"
        return apps.poisson_solve(prob, cfg)
    if m == "hetlasso":
        x, tr = apps.hetlasso_solve(prob, cfg)
        return np.concatenate([x[0], [x[1]]]), tr
    return solve_grad(prob.instance(), cfg)


def _summary_line(tr):
    s = tr.summary()
    return " ".join(f"{k}={v}" for k, v in s.items())


def cmd_solve(args):
    spec = _spec_from_args(args)
    errs = spec.validate()
    if errs:
        raise CLIError("invalid-spec", "; ".join(errs))
    x, tr = run(spec)
    if spec.out:
        dump_json(tr, spec.out)
    print(_summary_line(tr))
    return 0 if tr.converged else 2


def _sweep(specs, threads):
    def one(s):
        try:
            return s, run(s)[1], None
        except (SCompError, ValueError, ArithmeticError) as exc:
            return s, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, specs))
    return [one(s) for s in specs]


TABLE_COLUMNS = ["label", "runs", "failures", "iter", "n_chol", "n_chol_loop",
                 "n_matmul", "n_feval", "wall_ms"]


def summarize(label, traces, failures):
    ok = [t for t in traces if t is not None]
    row = {"label": label, "runs": len(traces), "failures": failures}
    for col, get in (("iter", lambda t: t.iterations),
                     ("n_chol", lambda t: t.counters.n_chol),
                     ("n_chol_loop", lambda t: t.counters.n_chol_loop),
                     ("n_matmul", lambda t: t.counters.n_matmul),
                     ("n_feval", lambda t: t.counters.n_feval),
                     ("wall_ms", lambda t: t.records[-1].wall_ms if t.records else 0.0)):
        row[col] = float(np.mean([get(t) for t in ok])) if ok else math.nan
    return row


def _threads():
    try:
        return max(1, int(os.environ.get("SCOMP_THREADS", "1")))
    except ValueError:
        return 1


def compare(base, labels, seeds, vary):
    """Run ``base`` with each label applied through ``vary(spec, label)`` over seeds."""
    specs = []
    for lab in labels:
        for sd in seeds:
            s = RunSpec(**{**base.__dict__, "seed": sd})
            vary(s, lab)
            errs = s.validate()
            if errs:
                raise CLIError("invalid-spec", "; ".join(errs))
            specs.append((lab, s))
    results = _sweep([s for _, s in specs], _threads())
    rows = []
    for lab in labels:
        got = [(tr, err) for (l2, _), (_, tr, err) in zip(specs, results) if l2 == lab]
        rows.append(summarize(lab, [t for t, _ in got], sum(e is not None for _, e in got)))
    return rows


def write_table(rows, out):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_compare_ls(args):
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if len(strategies) < 2:
        raise CLIError("usage", "compare-ls needs at least two strategies")
    base = _spec_from_args(args)
    if base.method not in NEWTON_METHODS:
        raise CLIError("usage", "compare-ls needs --method newton or dpngs")

    def vary(s, lab):
        s.strategy = lab

    rows = compare(base, strategies, parse_seeds(args.seeds), vary)
    write_table(rows, args.out)
    return 0


def cmd_compare_sub(args):
    base = _spec_from_args(args)
    base.problem = "graphlasso"
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise CLIError("usage", "compare-sub needs at least two methods")

    def vary(s, lab):
        s.method = lab

    rows = compare(base, methods, parse_seeds(args.seeds), vary)
    write_table(rows, args.out)
    return 0


def cmd_export(args):
    src = Path(args.input)
    if not src.exists():
        raise CLIError("input-not-found", str(src))
    text = src.read_text()
    try:
        if text.lstrip().startswith("{"):
            tr = SolverTrace.from_json_dict(json.loads(text))
        else:
            tr = SolverTrace(records=records_from_csv(text))
    except (ValueError, KeyError, TypeError) as exc:
        raise CLIError("malformed-trace", str(exc))
    if args.format == "csv":
        out = records_to_csv(tr.records)
    else:
        out = json.dumps(tr.to_json_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def _spec_from_args(args):
    return RunSpec(problem=args.problem, method=args.method, strategy=getattr(args, "strategy", "NoLS"),
                   rho=args.rho, eps=args.eps, max_iter=args.max_iter, input=args.input,
                   synthetic=parse_kv(args.synthetic), seed=getattr(args, "seed", None),
                   out=getattr(args, "out", None))


def _common(p, method="dpngs"):
    p.add_argument("--problem", default="graphlasso", help=f"one of {', '.join(PROBLEMS)}")
    p.add_argument("--method", default=method, help=f"one of {', '.join(METHODS)}")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--input", default=None)
    p.add_argument("--synthetic", default="", help="comma-separated key=value generator options")


def make_parser():
    ap = argparse.ArgumentParser(prog="scomp", description="Composite self-concordant solvers.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("solve", help="solve one instance")
    _common(p)
    p.add_argument("--strategy", default="NoLS", help=f"one of {', '.join(STRATEGIES)}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="trace JSON path")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("compare-ls", help="compare step-size strategies over seeds")
    _common(p)
    p.add_argument("--strategies", default=",".join(STRATEGIES))
    p.add_argument("--seeds", default="0-9")
    p.add_argument("--out", default=None, help="CSV table path")
    p.set_defaults(func=cmd_compare_ls)
    p = sub.add_parser("compare-sub", help="compare dual and primal subsolvers for graph selection")
    _common(p)
    p.add_argument("--methods", default="dpngs,newton")
    p.add_argument("--seeds", default="0-4")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare_sub)
    p = sub.add_parser("export", help="convert a trace between JSON and CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None):
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error reason={exc.reason} detail={exc.detail}", file=sys.stderr)
        return 1
    except (SCompError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error reason=solver-error detail={type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
