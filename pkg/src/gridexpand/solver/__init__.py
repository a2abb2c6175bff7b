"""Sparse concave QP solver (ADMM with active-set polishing)."""
from .admm import (DUAL_INFEASIBLE, ITERATION_LIMIT, OPTIMAL, PRIMAL_INFEASIBLE,
                   NotConcaveError, QpSolution, QpWorkspace, SolverSettings,
                   solve_qp)
from .backend import BACKEND, available

__all__ = [
    "SolverSettings", "QpSolution", "QpWorkspace", "solve_qp", "NotConcaveError",
    "OPTIMAL", "PRIMAL_INFEASIBLE", "DUAL_INFEASIBLE", "ITERATION_LIMIT",
    "BACKEND", "available",
]
