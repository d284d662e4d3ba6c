"""
Dense matrix primitives shared by every solver.

Matrices are numpy arrays in row-major (C) order. ``vec`` stacks columns, so it
reads the array in Fortran order; ``unvec`` is its inverse. All functions are pure
and never mutate their inputs.
"""

import logging
import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg

from src.core.constants import PSD_TOL, SINGULARITY_TOL, SYMMETRY_TOL
from src.core.exceptions import ConvergenceError, SingularMatrixError, ValidationError

logger = logging.getLogger(__name__)


class PsdCheck(NamedTuple):
    is_psd: bool
    witness: float
    """Smallest eigenvalue of X - shift*I"""


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array; vectors become columns."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def _require_square(X: np.ndarray, name: str) -> None:
    if X.shape[0] != X.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {X.shape}")


def kron(X, Y) -> np.ndarray:
    return np.kron(as_matrix(X, "X"), as_matrix(Y, "Y"))


def vec(X) -> np.ndarray:
    """Column-major stacking into a (rows*cols) x 1 column."""
    X = as_matrix(X, "X")
    return X.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValidationError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def commutation_matrix(d1: int, d2: int) -> np.ndarray:
    """Permutation K with K @ vec(X) == vec(X.T) for every d1 x d2 matrix X."""
    if d1 < 1 or d2 < 1:
        raise ValidationError(f"dimensions must be positive, got ({d1}, {d2})")
    i, j = np.meshgrid(np.arange(d1), np.arange(d2), indexing="ij")
    K = np.zeros((d1 * d2, d1 * d2))
    K[(j + i * d2).ravel(), (i + j * d1).ravel()] = 1.0
    return K


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def check_symmetric(X, name: str = "matrix") -> np.ndarray:
    X = as_matrix(X, name)
    _require_square(X, name)
    scale = np.linalg.norm(X, "fro")
    if np.linalg.norm(X - X.T, "fro") > SYMMETRY_TOL * max(scale, 1.0):
        raise ValidationError(f"{name} is not symmetric to tolerance")
    return symmetrize(X)


def spectral_radius(X) -> float:
    """Largest eigenvalue modulus, via LAPACK Hessenberg reduction and shifted QR."""
    X = as_matrix(X, "X")
    _require_square(X, "X")
    try:
        eigenvalues = scipy.linalg.eigvals(X, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise ConvergenceError(f"eigenvalue iteration did not converge: {e}") from e
    if not np.all(np.isfinite(eigenvalues)):
        raise ConvergenceError("eigenvalue iteration returned non-finite values")
    return float(np.max(np.abs(eigenvalues)))


def is_psd(X, shift: float = 0.0) -> PsdCheck:
    """
    Test X - shift*I for positive semidefiniteness.

    X is symmetrized first; asymmetry beyond tolerance is a validation error.
    """
    X = check_symmetric(X, "X")
    lam_min = float(scipy.linalg.eigvalsh(X, check_finite=False)[0]) - shift
    scale = max(1.0, float(np.linalg.norm(X, 2)))
    return PsdCheck(is_psd=lam_min >= -PSD_TOL * scale, witness=lam_min)


def solve_linear(A, B) -> np.ndarray:
    """
    Solve A X = B by partial-pivot LU.

    Raises SingularMatrixError when the smallest pivot of U falls below
    SINGULARITY_TOL times the largest entry of A. A 1-D B yields a 1-D X.
    """
    A = as_matrix(A, "A")
    _require_square(A, "A")
    B_arr = np.asarray(B, dtype=float)
    if B_arr.shape[0] != A.shape[0]:
        raise ValidationError(f"row count of B ({B_arr.shape[0]}) does not match A ({A.shape[0]})")
    if not np.all(np.isfinite(B_arr)):
        raise ValidationError("B contains NaN or Inf")

    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivot = float(np.min(np.abs(np.diag(lu))))
    if pivot < SINGULARITY_TOL * scale:
        raise SingularMatrixError(f"matrix is singular to tolerance (pivot {pivot:.3e})")
    return scipy.linalg.lu_solve((lu, piv), B_arr, check_finite=False)
