"""Problem container shared by the solvers."""

from dataclasses import dataclass
from typing import Any

import numpy as np

from .prox_ops import Regularizer, ZeroReg


@dataclass
class ProblemInstance:
    """``min f(x) + g(x)`` from ``x0``."""

    oracle: Any
    reg: Regularizer = None
    x0: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        if self.reg is None:
            self.reg = ZeroReg()
        self.x0 = np.asarray(self.x0, dtype=float)

    def objective(self, x, counters=None):
        """``F(x)``; ``+inf`` outside the domain."""
        g = self.reg.eval(x)
        if g == float("inf"):
            return g
        return self.oracle.at(x, counters).value() + g
