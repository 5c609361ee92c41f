"""Exception types raised by the solvers.

Out-of-domain probes are *not* errors: oracles return ``+inf`` for those.
The classes below signal contract violations.
"""


class SCompError(Exception):
    """Base class for all solver errors."""


class DomainError(SCompError, ValueError):
    """An argument lies outside the domain of an operation."""


class OracleConsistencyError(SCompError):
    """An oracle returned values that violate its own invariants."""


class RankDeficiencyError(SCompError):
    """A Hessian system could not be factorized."""

    def __init__(self, pivot, msg=None):
        self.pivot = int(pivot)
        super().__init__(msg or f"singular Hessian system (failing pivot {self.pivot})")


class SubsolverFailure(SCompError):
    """An inner iterative solver ran out of iterations."""

    def __init__(self, residual, iters, msg=None):
        self.residual = float(residual)
        self.iters = int(iters)
        super().__init__(msg or f"subsolver did not converge: residual {self.residual:.3e} after {self.iters} iterations")


class MetricError(SCompError):
    """The metric operator is indefinite or not symmetric."""


class CurvatureError(SCompError):
    """The BFGS curvature condition y'z > 0 fails."""


class StepConditionFailure(SCompError):
    """Halving ``L`` never satisfied the step-size acceptance condition."""

    def __init__(self, lam, beta, L):
        self.lam, self.beta, self.L = float(lam), float(beta), float(L)
        super().__init__(f"step condition failed: lambda={self.lam:.3e} beta={self.beta:.3e} L={self.L:.3e}")
