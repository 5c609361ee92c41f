"""Composite minimization with self-concordant smooth parts."""

from .errors import (CurvatureError, DomainError, MetricError, OracleConsistencyError,
                     RankDeficiencyError, SCompError, StepConditionFailure, SubsolverFailure)
from .problem import ProblemInstance
from .prox_grad import GradConfig, solve_grad
from .prox_newton import NewtonConfig, bfgs_update, solve_newton
from .prox_ops import L1Reg, TVNonnegReg, ZeroReg
from .sc_core import (BarrierQuadOracle, HetLassoOracle, LogDetOracle, PoissonOracle,
                      dual_local_norm, local_norm, omega, omega_star, standardize)
from .trace import Counters, SolverTrace

__version__ = "0.1.0"
