"""Input validation utilities."""

from typing import Optional, Tuple, Type

import numpy as np

from src.utils.exceptions import DimensionError, PPRError


def check_shape(
    M,
    shape: Tuple[int, ...],
    name: str,
    error: Type[PPRError] = DimensionError,
) -> None:
    """
    Validate the shape of an array or sparse matrix.

    Args:
        M: Array-like with a ``shape`` attribute
        shape: Expected shape
        name: Name used in the error message
        error: Exception class to raise

    Raises:
        error: If the shape does not match
    """
    actual = tuple(getattr(M, "shape", np.shape(M)))
    if actual != tuple(shape):
        raise error(f"{name} must have shape {tuple(shape)}, got {actual}")


def symmetry_defect(M: np.ndarray) -> float:
    """
    Relative distance of a square matrix from its transpose.

    Args:
        M: Square matrix

    Returns:
        ||M - M^T||_F / max(1, ||M||_F)
    """
    M = np.asarray(M)
    return float(np.linalg.norm(M - M.T) / max(1.0, np.linalg.norm(M)))


def is_positive_definite(M: np.ndarray) -> bool:
    """
    Check that a symmetric matrix is positive definite via Cholesky.

    Args:
        M: Symmetric matrix

    Returns:
        True if the Cholesky factorization succeeds
    """
    try:
        np.linalg.cholesky(np.asarray(M, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def is_positive_semidefinite(M: np.ndarray, rtol: float = 1e-12) -> bool:
    """
    Check that a symmetric matrix has no eigenvalue below -rtol*||M||.

    Args:
        M: Symmetric matrix
        rtol: Relative tolerance

    Returns:
        True if PSD within tolerance
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    scale = max(1.0, float(np.linalg.norm(M, 2)))
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T)).min() >= -rtol * scale)


def validate_degree(d: int, minimum: int = 2) -> Optional[str]:
    """
    Validate a value-function degree.

    Args:
        d: Requested degree
        minimum: Smallest admissible degree

    Returns:
        Error message if invalid, None if valid
    """
    if not isinstance(d, (int, np.integer)):
        return f"Degree must be an integer, got {d!r}"
    if d < minimum:
        return f"Degree must be at least {minimum}, got {d}"
    return None
