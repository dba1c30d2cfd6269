"""Deterministic numeric kernels: seeded randomness and small dense solvers.

All randomness in the library flows through :class:`SeededRng`. The generator
is a counter-based SplitMix64, chosen so that a stream is a pure function of
``(seed, index)`` and therefore reproducible bit for bit across platforms and
across process restarts. The full definition, so results can be regenerated
independently:

    state(i)  = (seed + (i + 1) * 0x9E3779B97F4A7C15)            mod 2^64
    mix(z)    : z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9 (mod 2^64)
                z ^= z >> 27;  z *= 0x94D049BB133111EB (mod 2^64)
                z ^= z >> 31
    output(i) = mix(state(i))

Uniform doubles take the top 53 bits: u = (output >> 11) * 2**-53 in [0, 1).
Gaussians use the Box-Muller map on consecutive pairs (u1 shifted into (0, 1]
so the logarithm is finite). Named substreams are derived functionally with
FNV-1a over the label, never by advancing shared state, so concurrent use
needs no locks.

Dense factorizations (QR, symmetric eigendecomposition, LU solves) are backed
by LAPACK through numpy; this module pins the conventions (sign normalization,
eigenvalue order, error mapping) the rest of the library relies on.

Internal computation is float64 throughout; 32-bit floats appear only in file
payloads written elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import InvalidDimensionError, InvalidInputError, SingularSystemError, TooLargeError

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# Desk-scale cap shared by the dense paths (materialization, eigensolves).
MAX_DENSE_DIM = 4096


def _mix64(z: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
    # uint64 multiplies wrap mod 2^64 by design
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _MIX1
        z = z ^ (z >> np.uint64(27))
        z = z * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class SeededRng:
    """Immutable descriptor of a deterministic random stream.

    The descriptor never mutates: reading position ``i`` of the stream is a
    pure function of ``(seed, i)``, and independent substreams are derived by
    label. Two calls with the same arguments always return the same values.
    """

    seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int):
            raise InvalidInputError(f"seed must be an int, got {type(self.seed).__name__}")
        object.__setattr__(self, "seed", self.seed & 0xFFFFFFFFFFFFFFFF)

    def derive(self, label: str) -> "SeededRng":
        """Return an independent stream keyed by ``label``.

        The child seed is mix(seed XOR fnv1a(label)), so derivation commutes
        with nothing and collides only if FNV collides on the labels used.
        """
        tag = _fnv1a(label.encode("utf-8"))
        child = int(_mix64(np.uint64((self.seed ^ tag) & 0xFFFFFFFFFFFFFFFF)))
        return SeededRng(child)

    def raw(self, n: int, start: int = 0) -> npt.NDArray[np.uint64]:
        """Raw 64-bit outputs at stream positions start..start+n-1."""
        if n < 0 or start < 0:
            raise InvalidInputError("raw() needs n >= 0 and start >= 0")
        idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        state = (np.uint64(self.seed) + idx * np.uint64(_GOLDEN)) & _MASK64
        return _mix64(state)

    def uniforms(self, n: int, start: int = 0) -> npt.NDArray[np.float64]:
        """Doubles in [0, 1) using the top 53 bits of each output."""
        return (self.raw(n, start) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def gaussians(self, n: int, start: int = 0) -> npt.NDArray[np.float64]:
        """Standard normals via Box-Muller on consecutive output pairs.

        Position ``start`` is in units of gaussians; a pair of raw outputs
        backs each consecutive pair of results, so overlapping windows of the
        same stream agree wherever they overlap pairwise.
        """
        if n < 0:
            raise InvalidInputError("gaussians() needs n >= 0")
        pair_lo = start // 2
        pair_hi = (start + n + 1) // 2
        pairs = pair_hi - pair_lo
        bits = self.raw(2 * pairs, 2 * pair_lo).reshape(pairs, 2)
        u1 = ((bits[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (bits[:, 1] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        lead = start - 2 * pair_lo
        return out[lead : lead + n]

    def signs(self, n: int, start: int = 0) -> npt.NDArray[np.float64]:
        """Fair +-1.0 draws from the top bit of each output."""
        top = self.raw(n, start) >> np.uint64(63)
        return np.where(top == 0, 1.0, -1.0)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        """Deterministic permutation of range(n) by sorting uniform keys."""
        keys = self.uniforms(n)
        return np.argsort(keys, kind="stable").astype(np.int64)


# ============================================================================
# Dense kernels
# ============================================================================


def rademacher(rng: SeededRng, d: int) -> npt.NDArray[np.float64]:
    """Length-d vector of independent +-1 entries drawn from ``rng``.

    Args:
        rng: stream descriptor; the whole vector comes from positions 0..d-1.
        d: number of entries, d >= 1.

    Returns:
        float64 vector with entries in {+1.0, -1.0}.

    Raises:
        InvalidDimensionError: if d < 1.
    """
    if d < 1:
        raise InvalidDimensionError(f"rademacher needs d >= 1, got {d}")
    return rng.signs(d)


def qr_orthogonal(rng: SeededRng, b: int) -> npt.NDArray[np.float64]:
    """Random orthogonal b x b matrix, unique for a given stream.

    A standard Gaussian matrix is drawn from ``rng`` and factored G = QR by
    Householder QR; Q's columns are then flipped so diag(R) >= 0, which makes
    the factor unique. The 1 x 1 case is normalized to [[1.0]] since a single
    coordinate has nothing to mix.

    Args:
        rng: stream the Gaussian entries are read from.
        b: matrix order, b >= 1.

    Returns:
        Orthogonal matrix with ||Q^T Q - I||_max at float64 roundoff.

    Raises:
        InvalidDimensionError: if b < 1.
    """
    if b < 1:
        raise InvalidDimensionError(f"qr_orthogonal needs b >= 1, got {b}")
    if b == 1:
        return np.ones((1, 1), dtype=np.float64)
    gauss = rng.gaussians(b * b).reshape(b, b)
    q, r = np.linalg.qr(gauss)
    flip = np.sign(np.diagonal(r))
    flip = np.where(flip == 0.0, 1.0, flip)
    return q * flip[np.newaxis, :]


def sym_eig(h: npt.NDArray[np.float64]) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Args:
        h: square symmetric matrix, ||H - H^T||_max <= 1e-9, order <= 4096.

    Returns:
        (Q, lam) with columns of Q the eigenvectors ordered so that
        lam[0] >= lam[1] >= ... and ||Q lam Q^T - H||_max <= 1e-8 ||H||_max.

    Raises:
        InvalidInputError: if h is not square or not symmetric to tolerance.
        TooLargeError: if the order exceeds the desk-scale cap.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidInputError(f"sym_eig needs a square matrix, got shape {h.shape}")
    if h.shape[0] > MAX_DENSE_DIM:
        raise TooLargeError(f"sym_eig supports order <= {MAX_DENSE_DIM}, got {h.shape[0]}")
    if h.size and np.max(np.abs(h - h.T)) > 1e-9:
        raise InvalidInputError("sym_eig input is asymmetric beyond 1e-9")
    sym = 0.5 * (h + h.T)
    lam, q = np.linalg.eigh(sym)
    order = np.argsort(-lam, kind="stable")
    return q[:, order], lam[order]


def solve_linear(
    a: npt.NDArray[np.float64], b: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """Solve A X = B for square A by partial-pivot LU.

    Args:
        a: square coefficient matrix.
        b: right-hand side, vector or matrix with matching leading dimension.

    Returns:
        X with the shape of b.

    Raises:
        InvalidInputError: on shape mismatch.
        SingularSystemError: if A is singular or the solve produced non-finite
            values.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"solve_linear needs square A, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise InvalidInputError(f"rhs leading dim {b.shape[0]} != order {a.shape[0]}")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solve produced non-finite values")
    return x
