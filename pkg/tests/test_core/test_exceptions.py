"""Tests for custom exceptions"""

import pytest
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


@pytest.mark.unit
class TestCustomExceptions:
    """Test suite for custom exception classes"""

    def test_base_exception(self):
        """Test base LqrToolkitException"""
        exc = LqrToolkitException("Test error")
        assert str(exc) == "Test error"
        assert isinstance(exc, Exception)

    def test_validation_error_is_value_error(self):
        """ValidationError is caught by plain ValueError handlers too"""
        exc = ValidationError("Invalid input")
        assert isinstance(exc, LqrToolkitException)
        assert isinstance(exc, ValueError)

    def test_convergence_error_carries_diagnostics(self):
        """Test ConvergenceError keeps the last iterate"""
        exc = ConvergenceError("did not converge", diagnostics={"iterations": 7})
        assert str(exc) == "did not converge"
        assert exc.diagnostics == {"iterations": 7}

    def test_convergence_error_default_diagnostics(self):
        """Test ConvergenceError without diagnostics"""
        assert ConvergenceError("no luck").diagnostics == {}

    def test_all_inherit_from_base(self):
        """Test every toolkit error derives from the base class"""
        for cls in (
            SingularMatrixError,
            NotDetectableError,
            InfeasibleError,
            ConfigurationError,
            SolverNotFoundError,
        ):
            exc = cls("boom")
            assert isinstance(exc, LqrToolkitException)
            assert str(exc) == "boom"

    def test_exception_raising(self):
        """Test that exceptions can be raised and caught as the base class"""
        with pytest.raises(LqrToolkitException) as exc_info:
            raise NotDetectableError("unobservable unstable mode")
        assert "unobservable" in str(exc_info.value)
