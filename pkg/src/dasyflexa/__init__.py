"""Distributed asynchronous successive convex approximation for composite problems."""

from .asynchrony import DelaySpec, ScheduleSpec, VersionedStateStore
from .engine import EngineConfig, Trace, run, run_parallel
from .estimators import DAsyFlexaLasso, DAsyFlexaMatrixCompletion
from .exceptions import ContractViolation, InvalidArgument, SolverFailure
from .metrics import (fit_linear_rate, lyapunov, max_safe_stepsize, merit_MV, prox_residual,
                      theory_constants)
from .objective import PartitionedProblem, estimate_block_lipschitz
from .partition import make_dependency_graph, make_partition
from .surrogate import SurrogateSpec, best_response

__version__ = "0.1.0"

__all__ = [
    "ContractViolation", "DAsyFlexaLasso", "DAsyFlexaMatrixCompletion", "DelaySpec",
    "EngineConfig", "InvalidArgument",
    "PartitionedProblem", "ScheduleSpec", "SolverFailure", "SurrogateSpec", "Trace",
    "VersionedStateStore", "best_response", "estimate_block_lipschitz", "fit_linear_rate",
    "lyapunov", "make_dependency_graph", "make_partition", "max_safe_stepsize", "merit_MV",
    "prox_residual", "run", "run_parallel", "theory_constants",
]
