"""Synthetic layer problems with outlier channels, plus raw tensor file I/O.

The generator manufactures the regime structured rotations are built for:
a few input channels carry disproportionate mass in both the weight and the
second-moment matrix.  H is assembled as (1/n) X^T X from correlated
Gaussian rows with per-channel scaling, so it is symmetric PSD by
construction and exactly reproducible from the seed.

Tensor files ("HTN1") are a minimal little-endian container:

    magic   4 bytes  b"HTN1" (the trailing digit is the format version)
    dtype   u8       0 = float32, 1 = float64, 2 = int8
    rank    u8
    dims    rank x u64
    payload row-major, little-endian, prod(dims) elements
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import FormatError, InvalidInputError
from .fitting import LayerProblem
from .numerics import SeededRng
from .validation import check_positive_int

TENSOR_MAGIC = b"HTN1"

_DTYPE_CODES: dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("i1"),
}
_CODE_FOR_KIND = {"f4": 0, "f8": 1, "i1": 2}


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one outlier-bearing layer problem.

    Attributes:
        d_in: input width (columns of W, order of H).
        d_out: output width (rows of W).
        outlier_channels: how many input channels get boosted.
        outlier_scale: multiplier on those channels (both W columns and
            the rows feeding H, so diag(H) grows by its square).
        rho: equicorrelation of the base activation rows, in [0, 1).
        seed: stream seed; equal specs generate equal problems.
        samples: activation rows drawn for H; defaults to 4 * d_in.
    """

    d_in: int
    d_out: int
    outlier_channels: int = 2
    outlier_scale: float = 30.0
    rho: float = 0.2
    seed: int = 0
    samples: int | None = None

    def __post_init__(self) -> None:
        check_positive_int(self.d_in, "d_in")
        check_positive_int(self.d_out, "d_out")
        if not 0 <= self.outlier_channels <= self.d_in:
            raise InvalidInputError(
                f"outlier_channels must be in [0, {self.d_in}], got {self.outlier_channels}"
            )
        if not 0.0 <= self.rho < 1.0:
            raise InvalidInputError(f"rho must be in [0, 1), got {self.rho}")
        if not np.isfinite(self.outlier_scale) or self.outlier_scale <= 0:
            raise InvalidInputError(f"outlier_scale must be positive, got {self.outlier_scale}")
        if self.samples is not None:
            check_positive_int(self.samples, "samples")

    @property
    def n_samples(self) -> int:
        return self.samples if self.samples is not None else 4 * self.d_in

    def channels(self) -> npt.NDArray[np.int64]:
        """The boosted channel indices (a seeded choice without replacement)."""
        rng = SeededRng(self.seed).derive("channels")
        return rng.permutation(self.d_in)[: self.outlier_channels]


def _correlation_factor(d: int, rho: float) -> npt.NDArray[np.float64]:
    # C = a I + c J with C C^T = (1-rho) I + rho J (unit diagonal, off-diag rho)
    a = np.sqrt(1.0 - rho)
    c = (np.sqrt(1.0 - rho + d * rho) - a) / d
    return a * np.eye(d) + c * np.ones((d, d))


def gen_problem(spec: SyntheticSpec) -> LayerProblem:
    """Draw the (W, H) pair a spec describes.

    H = (1/n) X^T X with X = (Z C) * scales per column: correlated unit
    Gaussian rows, then outlier channels multiplied by outlier_scale.  W is
    Gaussian with the same columns boosted.
    """
    rng = SeededRng(spec.seed)
    d, n = spec.d_in, spec.n_samples
    scales = np.ones(d)
    scales[spec.channels()] = spec.outlier_scale
    z = rng.derive("x").gaussians(n * d).reshape(n, d)
    x = (z @ _correlation_factor(d, spec.rho)) * scales[np.newaxis, :]
    h = x.T @ x / n
    h = 0.5 * (h + h.T)
    w = rng.derive("w").gaussians(spec.d_out * d).reshape(spec.d_out, d)
    w[:, spec.channels()] *= spec.outlier_scale
    return LayerProblem(w=w, h=h)


def write_tensor(path: str | Path, a: npt.NDArray) -> None:
    """Serialize an array to the HTN1 container (bit-exact round trip).

    Raises:
        InvalidInputError: unsupported dtype or rank > 255.
    """
    a = np.asarray(a)
    if a.ndim:  # ascontiguousarray would promote rank 0 to rank 1
        a = np.ascontiguousarray(a)
    kind = a.dtype.newbyteorder("<").str.lstrip("<>|=")
    if kind not in _CODE_FOR_KIND:
        raise InvalidInputError(f"unsupported tensor dtype {a.dtype} (use f32, f64, or i8)")
    if a.ndim > 255:
        raise InvalidInputError(f"rank {a.ndim} exceeds the format limit of 255")
    out = bytearray()
    out += TENSOR_MAGIC
    out += struct.pack("<BB", _CODE_FOR_KIND[kind], a.ndim)
    out += struct.pack(f"<{a.ndim}Q", *a.shape)
    out += a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def _need(buf: bytes, offset: int, count: int, what: str) -> int:
    if len(buf) - offset < count:
        raise FormatError(
            f"truncated tensor file: {what} at byte {offset} needs {count} bytes, "
            f"only {len(buf) - offset} remain"
        )
    return offset + count


def read_tensor(path: str | Path) -> npt.NDArray:
    """Read an HTN1 file back into an array of its stored dtype.

    Raises:
        FormatError: wrong magic/version, unknown dtype code, truncation,
            or trailing bytes; messages carry the byte offset.
    """
    buf = Path(path).read_bytes()
    off = _need(buf, 0, 4, "magic")
    magic = buf[:4]
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic/version: expected {TENSOR_MAGIC!r}, got {magic!r}")
    end = _need(buf, off, 2, "header")
    code, rank = struct.unpack_from("<BB", buf, off)
    off = end
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code} at byte 4")
    dtype = _DTYPE_CODES[code]
    end = _need(buf, off, 8 * rank, "dims")
    dims = struct.unpack_from(f"<{rank}Q", buf, off)
    off = end
    count = 1
    for d in dims:
        count *= d
    nbytes = count * dtype.itemsize
    end = _need(buf, off, nbytes, "payload")
    if len(buf) != end:
        raise FormatError(f"trailing bytes: expected file length {end}, got {len(buf)}")
    a = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
    return a.reshape(dims).copy()
