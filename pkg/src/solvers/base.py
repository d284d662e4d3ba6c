"""
Base class for control-design methods.
"""

from abc import ABC, abstractmethod
from typing import Dict, Optional

import numpy as np

from src.core.constants import Method
from src.models.schemas import CostSpec, ScenarioSet, StabilizedSolution


class Solver(ABC):
    """A method that turns a scenario set and a cost into a constant feedback gain."""

    def __init__(self):
        self.method = self.get_method()
        self.name = self.get_name()
        self.description = self.get_description()

    @abstractmethod
    def get_method(self) -> Method:
        """Return the method tag."""
        pass

    @abstractmethod
    def get_description(self) -> str:
        """Return a one-line description of the method."""
        pass

    def get_name(self) -> str:
        return self.get_method().value

    @property
    def robust(self) -> bool:
        """Whether the method accepts more than one scenario."""
        return True

    @abstractmethod
    def solve(
        self,
        scenarios: ScenarioSet,
        cost: CostSpec,
        rng: Optional[np.random.Generator] = None,
    ) -> StabilizedSolution:
        """Solve for one system (N = 1) or for the worst case over N scenarios."""
        pass

    def describe(self) -> Dict[str, str]:
        return {"name": self.name, "description": self.description}
