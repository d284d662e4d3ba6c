"""
Error Handler

Centralized error handling for the bench CLI.
Catches exceptions, writes a standardized error report to stderr and
returns the process exit code.
"""

import logging
import sys
from typing import Callable, Optional

import pydantic

from src.core.error_response import ErrorCodes, ErrorReport, ExitCodes
from src.core.exceptions import (
    ConfigurationError,
    ConvergenceError,
    InfeasibleError,
    LqrToolkitException,
    NotDetectableError,
    SingularMatrixError,
    SolverNotFoundError,
    ValidationError,
)

logger = logging.getLogger(__name__)


def _emit(report: ErrorReport) -> int:
    sys.stderr.write(report.model_dump_json() + "\n")
    return report.exit_code


def handle_exception(exc: BaseException, command: Optional[str] = None) -> int:
    """Map an exception to an error report on stderr and an exit code."""
    if isinstance(exc, pydantic.ValidationError):
        logger.warning(f"Invalid configuration for {command}: {exc}", extra={"command": command})
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        return _emit(
            ErrorReport.create(
                error_code=ErrorCodes.VALIDATION_ERROR,
                message="Configuration failed validation",
                details=details,
                command=command,
                exit_code=ExitCodes.CONFIG_ERROR,
            )
        )

    if isinstance(exc, SolverNotFoundError):
        return _emit(
            ErrorReport.create(
                error_code=ErrorCodes.UNKNOWN_METHOD,
                message=str(exc),
                command=command,
                exit_code=ExitCodes.CONFIG_ERROR,
            )
        )

    if isinstance(exc, (ValidationError, ConfigurationError)):
        logger.warning(f"Rejected input for {command}: {exc}", extra={"command": command})
        code = ErrorCodes.CONFIG_ERROR if isinstance(exc, ConfigurationError) else ErrorCodes.VALIDATION_ERROR
        return _emit(
            ErrorReport.create(
                error_code=code,
                message=str(exc),
                command=command,
                exit_code=ExitCodes.CONFIG_ERROR,
            )
        )

    if isinstance(exc, NotDetectableError):
        logger.info(f"Not detectable: {exc}", extra={"command": command})
        return _emit(
            ErrorReport.create(
                error_code=ErrorCodes.NOT_DETECTABLE,
                message=str(exc),
                command=command,
                exit_code=ExitCodes.NOT_DETECTABLE,
            )
        )

    if isinstance(exc, LqrToolkitException):
        if isinstance(exc, SingularMatrixError):
            code = ErrorCodes.SINGULAR_MATRIX
        elif isinstance(exc, ConvergenceError):
            code = ErrorCodes.CONVERGENCE_FAILURE
        elif isinstance(exc, InfeasibleError):
            code = ErrorCodes.INFEASIBLE
        else:
            code = ErrorCodes.INTERNAL_ERROR
        logger.error(f"Solver failure in {command}: {exc}", extra={"command": command})
        diagnostics = getattr(exc, "diagnostics", {}) or {}
        return _emit(
            ErrorReport.create(
                error_code=code,
                message=str(exc),
                command=command,
                exit_code=ExitCodes.SOLVER_FAILURE,
                diagnostics={k: repr(v) for k, v in diagnostics.items()},
            )
        )

    # Unhandled exceptions
    logger.error(f"Unhandled exception in {command}: {exc}", exc_info=True)
    return _emit(
        ErrorReport.create(
            error_code=ErrorCodes.INTERNAL_ERROR,
            message="An unexpected error occurred",
            details=f"{type(exc).__name__}: {exc}",
            command=command,
            exit_code=ExitCodes.SOLVER_FAILURE,
        )
    )


def run_guarded(command: str, fn: Callable[[], int]) -> int:
    """Run a CLI command, turning any exception into its exit code."""
    try:
        return fn()
    except Exception as e:
        return handle_exception(e, command)
