"""
LQR formulations, stability-constrained feedback designs and scenario tools.
"""

from src.solvers.base import Solver
from src.solvers.registry import SolverRegistry, get_solver_registry

__all__ = ["Solver", "SolverRegistry", "get_solver_registry"]
