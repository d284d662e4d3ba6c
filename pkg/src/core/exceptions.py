from typing import Any, Dict, Optional


class LqrToolkitException(Exception):
    pass


class ValidationError(LqrToolkitException, ValueError):
    pass


class SingularMatrixError(LqrToolkitException):
    pass


class ConvergenceError(LqrToolkitException):
    """Numerical failure of an iterative routine; carries the last iterate for inspection."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = diagnostics or {}


class NotDetectableError(LqrToolkitException):
    pass


class InfeasibleError(LqrToolkitException):
    pass


class ConfigurationError(LqrToolkitException):
    pass


class SolverNotFoundError(LqrToolkitException):
    pass
