"""Learnable orthogonal block kernels: Givens (b = 2) and Cayley (b > 2).

A block kernel is B = Q(theta) G where G is the stage's fixed mixer and
Q(theta) is an orthogonal matrix that is exactly the identity at theta = 0,
so an all-zero parameter vector reproduces the fixed mixer bit for bit.

For b = 2 the single angle enters as the plane rotation
[[cos t, -sin t], [sin t, cos t]]. For b > 2 the b(b-1)/2 angles fill the
strict upper triangle of a skew matrix A in row-major pair order
(0,1), (0,2), ..., (1,2), ... and Q = (I + A)^-1 (I - A). The adjoint uses
the matrix differential dQ = -(I + A)^-1 dA (I + Q), reusing the LU
factorization of (I + A) cached by the forward pass so the reverse sweep does
no second factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import lu_factor, lu_solve

from .errors import InvalidBlockError, InvalidInputError
from .mixers import BaseMixer
from .validation import check_positive_int


def n_params(b: int) -> int:
    """Angle count for a block of order b: b(b-1)/2 (one Givens angle at b=2)."""
    check_positive_int(b, "b", minimum=2)
    return b * (b - 1) // 2


@dataclass
class BlockParams:
    """Learnable angles for one block.

    Attributes:
        radix: block order b >= 2.
        theta: float64 vector of length b(b-1)/2.
    """

    radix: int
    theta: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        check_positive_int(self.radix, "radix", minimum=2)
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] != n_params(self.radix):
            raise InvalidBlockError(
                f"radix {self.radix} needs {n_params(self.radix)} angles, "
                f"got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise InvalidBlockError("theta contains non-finite entries")
        self.theta = theta

    @classmethod
    def zeros(cls, radix: int) -> "BlockParams":
        return cls(radix, np.zeros(n_params(radix)))


@dataclass
class KernelCache:
    """Forward-pass intermediates the adjoint reuses.

    ``lu`` is None when the forward short-circuited at theta = 0 (Q = I) or
    when the block is a Givens rotation.
    """

    q: npt.NDArray[np.float64]
    lu: tuple[npt.NDArray[np.float64], npt.NDArray[np.intp]] | None


def givens(theta: float) -> npt.NDArray[np.float64]:
    """2 x 2 plane rotation [[cos t, -sin t], [sin t, cos t]]."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


def _skew(b: int, theta: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    a = np.zeros((b, b), dtype=np.float64)
    rows, cols = np.triu_indices(b, k=1)
    a[rows, cols] = theta
    a[cols, rows] = -theta
    return a


def cayley(b: int, theta: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Orthogonal Q = (I + A)^-1 (I - A) with A skew-built from theta.

    All-zero theta short-circuits to an exact identity so downstream
    equality checks at the zero parameterization hold bit for bit.

    Args:
        b: block order, >= 2.
        theta: b(b-1)/2 angles filling the strict upper triangle row-major.

    Returns:
        b x b orthogonal matrix with determinant +1.
    """
    q, _ = _cayley_with_cache(b, theta)
    return q


def _cayley_with_cache(
    b: int, theta: npt.NDArray[np.float64]
) -> tuple[npt.NDArray[np.float64], tuple | None]:
    if theta.shape[0] != n_params(b):
        raise InvalidBlockError(f"need {n_params(b)} angles for b={b}, got {theta.shape[0]}")
    if not np.any(theta):
        return np.eye(b), None
    a = _skew(b, theta)
    lu = lu_factor(np.eye(b) + a)
    q = lu_solve(lu, np.eye(b) - a)
    return q, lu


def block_kernel(params: BlockParams, mixer: BaseMixer) -> npt.NDArray[np.float64]:
    """Kernel B = Q(theta) G for one block; exactly G at theta = 0."""
    kernel, _ = block_kernel_with_cache(params, mixer)
    return kernel


def block_kernel_with_cache(
    params: BlockParams, mixer: BaseMixer
) -> tuple[npt.NDArray[np.float64], KernelCache]:
    """Kernel plus the intermediates block_kernel_adjoint needs.

    Args:
        params: block angles.
        mixer: fixed mixing matrix of matching order.

    Returns:
        (B, cache) where B = Q(theta) @ mixer.matrix.

    Raises:
        InvalidBlockError: if the mixer order does not match the radix.
    """
    b = params.radix
    if mixer.size != b:
        raise InvalidBlockError(f"mixer order {mixer.size} != block radix {b}")
    if not np.any(params.theta):
        return mixer.matrix.copy(), KernelCache(q=np.eye(b), lu=None)
    if b == 2:
        q = givens(params.theta[0])
        return q @ mixer.matrix, KernelCache(q=q, lu=None)
    q, lu = _cayley_with_cache(b, params.theta)
    return q @ mixer.matrix, KernelCache(q=q, lu=lu)


def block_kernel_adjoint(
    params: BlockParams,
    mixer: BaseMixer,
    upstream: npt.NDArray[np.float64],
    cache: KernelCache | None = None,
) -> npt.NDArray[np.float64]:
    """Gradient of <upstream, B> with respect to theta.

    Args:
        params: block angles the forward pass used.
        mixer: the block's fixed mixer.
        upstream: dL/dB, same shape as the kernel.
        cache: forward intermediates; recomputed when omitted.

    Returns:
        dL/dtheta, same length as params.theta.
    """
    b = params.radix
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (b, b):
        raise InvalidInputError(f"upstream shape {upstream.shape} != ({b}, {b})")
    if cache is None:
        _, cache = block_kernel_with_cache(params, mixer)
    grad_q = upstream @ mixer.matrix.T
    if b == 2:
        t = params.theta[0]
        dq = np.array([[-np.sin(t), -np.cos(t)], [np.cos(t), -np.sin(t)]])
        return np.array([np.sum(grad_q * dq)])
    # dQ = -(I+A)^-1 dA (I+Q)  =>  dL/dA = -(I+A)^-T grad_q (I+Q)^T
    if cache.lu is None:
        solved = grad_q
    else:
        solved = lu_solve(cache.lu, grad_q, trans=1)
    grad_a = -solved @ (np.eye(b) + cache.q).T
    rows, cols = np.triu_indices(b, k=1)
    return grad_a[rows, cols] - grad_a[cols, rows]
