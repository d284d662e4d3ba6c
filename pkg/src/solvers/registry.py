"""
Solver registry for looking up methods by tag.
"""

from typing import Dict, List, Optional

from src.core.constants import Method
from src.core.exceptions import SolverNotFoundError
from src.models.schemas import NelderMeadConfig, S0Config
from src.solvers.base import Solver
from src.solvers.methods import ClassicSolver, S0Solver, S1Solver, S2Solver, SinfSolver


class SolverRegistry:
    """Registry for all available methods."""

    def __init__(
        self,
        s0_config: Optional[S0Config] = None,
        nm_config: Optional[NelderMeadConfig] = None,
    ):
        self._solvers: Dict[Method, Solver] = {}
        self._register_default_solvers(s0_config, nm_config)

    def _register_default_solvers(self, s0_config, nm_config):
        self.register_solver(S0Solver(s0_config))
        self.register_solver(S1Solver(nm_config))
        self.register_solver(S2Solver(nm_config))
        self.register_solver(SinfSolver())
        self.register_solver(ClassicSolver())

    def register_solver(self, solver: Solver):
        self._solvers[solver.method] = solver

    def get_solver(self, method) -> Solver:
        """Look a solver up by Method or its string tag."""
        try:
            return self._solvers[Method(method)]
        except (ValueError, KeyError):
            raise SolverNotFoundError(f"Unknown method '{method}'")

    def get_method_names(self) -> List[str]:
        return [m.value for m in self._solvers]

    def describe(self) -> List[Dict[str, str]]:
        return [solver.describe() for solver in self._solvers.values()]


_solver_registry: Optional[SolverRegistry] = None


def get_solver_registry() -> SolverRegistry:
    """Get the global registry, built with default solver settings."""
    global _solver_registry
    if _solver_registry is None:
        _solver_registry = SolverRegistry()
    return _solver_registry
