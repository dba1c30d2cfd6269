"""Input validation helpers used at the public entry points.

Each helper returns the validated (and converted) array so call sites can
write ``w = check_matrix(w, "w")`` and rely on float64 contiguous data from
then on.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

from .errors import InvalidInputError


def check_matrix(
    x: npt.ArrayLike, name: str, *, square: bool = False
) -> npt.NDArray[np.float64]:
    """Validate a 2-D real matrix with finite entries.

    Args:
        x: array-like to validate.
        name: argument name for error messages.
        square: additionally require equal dimensions.

    Returns:
        C-contiguous float64 copy-or-view of the input.

    Raises:
        InvalidInputError: wrong rank, empty, non-finite, or not square when
            ``square`` is set.
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_vector(x: npt.ArrayLike, name: str, *, length: int | None = None) -> npt.NDArray[np.float64]:
    """Validate a 1-D real vector with finite entries, optionally of fixed length."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if length is not None and arr.shape[0] != length:
        raise InvalidInputError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def check_symmetric(
    x: npt.ArrayLike, name: str, *, tol: float = 1e-9
) -> npt.NDArray[np.float64]:
    """Validate a square matrix symmetric to ``tol`` in max-abs."""
    arr = check_matrix(x, name, square=True)
    if np.max(np.abs(arr - arr.T)) > tol:
        raise InvalidInputError(f"{name} is asymmetric beyond {tol:g}")
    return arr


def check_signs(x: npt.ArrayLike, name: str, *, length: int) -> npt.NDArray[np.float64]:
    """Validate a +-1 sign vector of the given length."""
    arr = check_vector(x, name, length=length)
    if not np.all(np.abs(arr) == 1.0):
        raise InvalidInputError(f"{name} entries must all be +1 or -1")
    return arr


def check_positive_int(value: int, name: str, *, minimum: int = 1) -> int:
    """Validate an integer argument with a lower bound."""
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise InvalidInputError(f"{name} must be an int, got {type(value).__name__}")
    if value < minimum:
        raise InvalidInputError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
