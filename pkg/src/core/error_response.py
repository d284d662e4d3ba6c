"""
Error Report Models

Standardized error reports for the command-line runner, with error codes,
run IDs for tracing and process exit codes.
"""

from datetime import datetime, timezone
from typing import Any, Dict, Optional
from uuid import uuid4

from pydantic import BaseModel, ConfigDict, Field


class ErrorReport(BaseModel):
    """Standardized error report format"""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "error_code": "NOT_DETECTABLE",
                "message": "(F, Q^1/2) is not detectable",
                "details": "unobservable eigenvalue 1.0",
                "run_id": "550e8400-e29b-41d4-a716-446655440000",
                "timestamp": "2024-12-22T10:30:00Z",
                "command": "solve",
                "exit_code": 4,
            }
        }
    )

    error_code: str = Field(..., description="Machine-readable error code")
    message: str = Field(..., description="Human-readable error message")
    details: Optional[str] = Field(None, description="Additional error details")
    run_id: str = Field(..., description="Unique run identifier for tracing")
    timestamp: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc), description="Error timestamp"
    )
    command: Optional[str] = Field(None, description="CLI subcommand where the error occurred")
    exit_code: int = Field(..., description="Process exit status")
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def create(
        cls,
        error_code: str,
        message: str,
        exit_code: int,
        details: Optional[str] = None,
        command: Optional[str] = None,
        run_id: Optional[str] = None,
        diagnostics: Optional[Dict[str, Any]] = None,
    ) -> "ErrorReport":
        """Factory method to create error reports"""
        return cls(
            error_code=error_code,
            message=message,
            details=details,
            run_id=run_id or str(uuid4()),
            timestamp=datetime.now(timezone.utc),
            command=command,
            exit_code=exit_code,
            diagnostics=diagnostics or {},
        )


class ErrorCodes:
    """Standard error codes used across the toolkit"""

    # Input problems
    VALIDATION_ERROR = "VALIDATION_ERROR"
    CONFIG_ERROR = "CONFIG_ERROR"
    UNKNOWN_METHOD = "UNKNOWN_METHOD"

    # Numerical problems
    SINGULAR_MATRIX = "SINGULAR_MATRIX"
    CONVERGENCE_FAILURE = "CONVERGENCE_FAILURE"
    INFEASIBLE = "INFEASIBLE"

    # Theory-level verdicts
    NOT_DETECTABLE = "NOT_DETECTABLE"

    INTERNAL_ERROR = "INTERNAL_ERROR"


class ExitCodes:
    """Process exit statuses of the bench CLI"""

    SUCCESS = 0
    CONFIG_ERROR = 2
    SOLVER_FAILURE = 3
    NOT_DETECTABLE = 4
