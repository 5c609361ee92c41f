"""Operation counters and per-iteration solver traces."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

SCHEMA_VERSION = 1


@dataclass
class Counters:
    """Cumulative cost counters for one solve.

    ``n_chol`` counts every Cholesky factorization; ``n_chol_feval`` is the
    subset triggered by objective evaluations requested by a line search.
    """

    n_chol: int = 0
    n_chol_feval: int = 0
    n_matmul: int = 0
    n_prox: int = 0
    n_feval: int = 0

    def copy(self):
        return Counters(**asdict(self))

    @property
    def n_chol_loop(self):
        """Factorizations spent on directions, excluding objective evaluations."""
        return self.n_chol - self.n_chol_feval


@dataclass
class TraceRecord:
    k: int
    F: float
    lam: float
    beta: float
    alpha: float
    L: float
    n_chol: int
    n_matmul: int
    n_prox: int
    n_feval: int
    wall_ms: float
    phase: str = ""
    inner_iters: int = 0

    # JSON/CSV use "lambda" as column name
    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["lam"] = d.pop("lambda")
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


COLUMNS = ["k", "F", "lambda", "beta", "alpha", "L", "n_chol", "n_matmul",
           "n_prox", "n_feval", "wall_ms", "phase", "inner_iters"]
_INT_COLUMNS = {"k", "n_chol", "n_matmul", "n_prox", "n_feval", "inner_iters"}
_STR_COLUMNS = {"phase"}


@dataclass
class SolverTrace:
    method: str = ""
    records: list = field(default_factory=list)
    status: str = "running"  # converged | max_iter | running
    anomalies: list = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)
    extras: dict = field(default_factory=dict)

    def append(self, **kw):
        c = self.counters
        rec = TraceRecord(n_chol=c.n_chol, n_matmul=c.n_matmul, n_prox=c.n_prox,
                          n_feval=c.n_feval, **kw)
        self.records.append(rec)
        return rec

    def column(self, name):
        attr = "lam" if name == "lambda" else name
        return [getattr(r, attr) for r in self.records]

    def __len__(self):
        return len(self.records)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def iterations(self):
        """Number of updates performed (the final record only tests termination)."""
        n = len(self.records)
        if n and self.records[-1].phase == "stop":
            return n - 1
        return n

    def summary(self):
        last = self.records[-1] if self.records else None
        return {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "final_F": last.F if last else None,
            "final_lambda": last.lam if last else None,
            "n_chol": self.counters.n_chol,
            "n_chol_loop": self.counters.n_chol_loop,
            "n_matmul": self.counters.n_matmul,
            "n_prox": self.counters.n_prox,
            "n_feval": self.counters.n_feval,
            "anomalies": len(self.anomalies),
        }

    def to_json_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "method": self.method,
            "status": self.status,
            "anomalies": list(self.anomalies),
            "counters": asdict(self.counters),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_json_dict(cls, d):
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported trace schema {d.get('schema')!r}")
        recs = d.get("records")
        if not isinstance(recs, list):
            raise ValueError("trace has no record list")
        return cls(method=d.get("method", ""),
                   records=[TraceRecord.from_dict(r) for r in recs],
                   status=d.get("status", "running"),
                   anomalies=list(d.get("anomalies", [])),
                   counters=Counters(**d.get("counters", {})))


def dump_json(trace, path):
    with open(path, "w") as fh:
        json.dump(trace.to_json_dict(), fh, indent=1)


def load_json(path):
    with open(path) as fh:
        return SolverTrace.from_json_dict(json.load(fh))


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def records_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty csv")
    header = rows[0]
    if header != COLUMNS:
        raise ValueError(f"unexpected csv header {header}")
    out = []
    for row in rows[1:]:
        d = {}
        for name, cell in zip(header, row):
            if name in _STR_COLUMNS:
                d[name] = cell
            elif name in _INT_COLUMNS:
                d[name] = int(cell)
            else:
                d[name] = float(cell)
        out.append(TraceRecord.from_dict(d))
    return out


def _fmt(v):
    # repr gives the shortest round-tripping form for floats
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)
