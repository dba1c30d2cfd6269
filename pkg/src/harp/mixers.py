"""Fixed per-stage mixing matrices and small Hadamard sign tables.

Power-of-two radices mix with normalized Sylvester-Hadamard matrices; any
other radix gets a seeded random orthogonal fallback so the stage still
spreads energy across its block. The fallback seed is derived from the radix
and a fixed library constant, so every stage of every processor uses the same
matrix for a given radix and files reload bit-exactly.

Sign tables are exact {-1, +1} Hadamard matrices kept in integer form. The
shipped orders are {1, 2, 4, 8, 12, 20, 28}: powers of two by the Sylvester
doubling, 12 and 20 by the quadratic-residue construction over GF(11) and
GF(19), and 28 by the doubled variant over GF(13). Every table is verified
H H^T = K I in exact integer arithmetic before it leaves this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import InvalidInputError, InvalidRadixError, NoTableAvailableError
from .numerics import SeededRng, qr_orthogonal
from .validation import check_positive_int

# Root seed for radix-keyed fallback mixers ("HARP" in ASCII).
MIXER_ROOT_SEED = 0x48415250

SUPPORTED_TABLE_ORDERS = (1, 2, 4, 8, 12, 20, 28)

MIXER_KINDS = ("hadamard", "qr-fallback", "identity")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class BaseMixer:
    """A fixed orthogonal block matrix used by one stage.

    Attributes:
        size: block order b.
        kind: "hadamard", "qr-fallback", or "identity".
        matrix: the orthogonal b x b matrix itself, float64.
        seed: stream seed the matrix was drawn from (qr-fallback only).
    """

    size: int
    kind: str
    matrix: npt.NDArray[np.float64]
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in MIXER_KINDS:
            raise InvalidInputError(f"unknown mixer kind {self.kind!r}")
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (self.size, self.size):
            raise InvalidInputError(f"mixer matrix shape {m.shape} != ({self.size}, {self.size})")
        gram_err = np.max(np.abs(m.T @ m - np.eye(self.size)))
        if gram_err > 1e-12:
            raise InvalidInputError(f"mixer is not orthogonal: ||M^T M - I||_max = {gram_err:.3e}")
        object.__setattr__(self, "matrix", m)


def _sylvester_int(b: int) -> npt.NDArray[np.int64]:
    """Unnormalized {-1,+1} Sylvester matrix of power-of-two order b."""
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < b:
        h = np.block([[h, h], [h, -h]])
    return h


def sylvester_hadamard(b: int) -> npt.NDArray[np.float64]:
    """Normalized Sylvester-Hadamard matrix of power-of-two order b.

    Built by the doubling recursion [[H, H], [H, -H]] from [[1]] and scaled
    by b**-0.5, so all entries are +-b**-0.5 and the matrix is orthogonal
    and symmetric.

    Args:
        b: order, a power of two >= 1.

    Returns:
        b x b float64 matrix.

    Raises:
        InvalidRadixError: if b is not a power of two.
    """
    check_positive_int(b, "b")
    if not is_power_of_two(b):
        raise InvalidRadixError(f"sylvester_hadamard needs a power of two, got {b}")
    return _sylvester_int(b).astype(np.float64) / np.sqrt(float(b))


def hadamard_mixer(b: int) -> BaseMixer:
    """Sylvester-Hadamard mixer for a power-of-two radix."""
    return BaseMixer(size=b, kind="hadamard", matrix=sylvester_hadamard(b))


def identity_mixer(b: int) -> BaseMixer:
    """Identity mixer (no spreading); used for ablations."""
    check_positive_int(b, "b")
    return BaseMixer(size=b, kind="identity", matrix=np.eye(b))


def fallback_seed(b: int) -> int:
    """Stream seed used for the radix-b fallback mixer."""
    return SeededRng(MIXER_ROOT_SEED).derive(f"fallback-mixer-{b}").seed


def fallback_mixer(b: int, rng: SeededRng | None = None) -> BaseMixer:
    """Seeded random orthogonal mixer for radices with no Hadamard matrix.

    Args:
        b: block order, >= 2.
        rng: stream to draw from; defaults to the radix-keyed library stream
            so the same radix always gets the same mixer.

    Returns:
        BaseMixer of kind "qr-fallback" carrying the seed it was drawn from.
    """
    check_positive_int(b, "b", minimum=2)
    if rng is None:
        rng = SeededRng(fallback_seed(b))
    return BaseMixer(size=b, kind="qr-fallback", matrix=qr_orthogonal(rng, b), seed=rng.seed)


def mixer_for_radix(b: int, rng: SeededRng | None = None) -> BaseMixer:
    """Hadamard mixer when the radix is a power of two, fallback otherwise."""
    if is_power_of_two(b):
        return hadamard_mixer(b)
    return fallback_mixer(b, rng)


def mixer_from_record(kind: str, size: int, seed: int) -> BaseMixer:
    """Rebuild a mixer from its serialized (kind, size, seed) record."""
    if kind == "hadamard":
        return hadamard_mixer(size)
    if kind == "identity":
        return identity_mixer(size)
    if kind == "qr-fallback":
        return fallback_mixer(size, SeededRng(seed))
    raise InvalidInputError(f"unknown mixer kind {kind!r}")


# ============================================================================
# Integer sign tables
# ============================================================================


def _residue_character(q: int) -> npt.NDArray[np.int64]:
    """chi over GF(q): chi(0) = 0, +1 on squares, -1 otherwise (prime q)."""
    chi = -np.ones(q, dtype=np.int64)
    chi[0] = 0
    for a in range(1, q):
        if pow(a, (q - 1) // 2, q) == 1:
            chi[a] = 1
    return chi


def _jacobsthal(q: int) -> npt.NDArray[np.int64]:
    """Q[i, j] = chi(i - j mod q)."""
    chi = _residue_character(q)
    idx = (np.arange(q)[:, None] - np.arange(q)[None, :]) % q
    return chi[idx]


def _paley_i(q: int) -> npt.NDArray[np.int64]:
    """Hadamard matrix of order q + 1 for prime q = 3 (mod 4)."""
    n = q + 1
    c = np.zeros((n, n), dtype=np.int64)
    c[0, 1:] = 1
    c[1:, 0] = -1
    c[1:, 1:] = _jacobsthal(q)
    return c + np.eye(n, dtype=np.int64)


def _paley_ii(q: int) -> npt.NDArray[np.int64]:
    """Hadamard matrix of order 2(q + 1) for prime q = 1 (mod 4)."""
    n = q + 1
    s = np.zeros((n, n), dtype=np.int64)
    s[0, 1:] = 1
    s[1:, 0] = 1
    s[1:, 1:] = _jacobsthal(q)
    on = np.array([[1, 1], [1, -1]], dtype=np.int64)
    off = np.array([[1, -1], [-1, -1]], dtype=np.int64)
    return np.kron(s, on) + np.kron(np.eye(n, dtype=np.int64), off)


def sign_table(k: int) -> npt.NDArray[np.int64]:
    """Exact {-1,+1} Hadamard matrix of order k, integer dtype.

    Args:
        k: one of SUPPORTED_TABLE_ORDERS.

    Returns:
        k x k int64 matrix satisfying H H^T = k I exactly.

    Raises:
        NoTableAvailableError: for any other order.
    """
    if k not in SUPPORTED_TABLE_ORDERS:
        raise NoTableAvailableError(
            f"no sign table of order {k}; shipped orders are {SUPPORTED_TABLE_ORDERS}"
        )
    if is_power_of_two(k):
        table = _sylvester_int(k)
    elif k == 12:
        table = _paley_i(11)
    elif k == 20:
        table = _paley_i(19)
    else:
        table = _paley_ii(13)
    gram = table @ table.T
    if not np.array_equal(gram, k * np.eye(k, dtype=np.int64)):
        raise AssertionError(f"sign table of order {k} failed H H^T = {k} I")
    return table
