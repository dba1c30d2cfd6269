"""Weight quantizer backends: groupwise scalar round-to-nearest and a seeded
Gaussian codebook vector quantizer.

Both backends are pure functions of their inputs (the codebook is a pure
function of its seed), so repeated calls agree bit for bit.

Grid convention for the scalar backend, fixed by the library: per contiguous
length-``group`` row segment, s = absmax / 2^(k-1) (s = 1 for an all-zero
segment), codes are round-half-even(w / s) clamped to
[-2^(k-1), 2^(k-1) - 1], and the output is s * code. Note the asymmetric
clamp: a segment whose largest magnitude is a positive entry reproduces that
peak at (2^(k-1) - 1) s, so requantizing such output can shrink it again;
when the peak magnitude is attained by a negative entry the grid reproduces
itself and the map is idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from .errors import InvalidInputError, TooLargeError
from .numerics import SeededRng
from .validation import check_matrix, check_positive_int

QUANTIZER_KINDS = ("scalar-rtn", "codebook-vq")

# Largest codebook address width: 2^12 = 4096 codewords.
MAX_CODEBOOK_ADDRESS_BITS = 12


@dataclass(frozen=True)
class QuantizerSpec:
    """Declarative description of a quantizer.

    Attributes:
        kind: "scalar-rtn" or "codebook-vq".
        bits: code width k per scalar (scalar) or per segment entry (vq).
        group: scalar backend's segment length along rows.
        block: vq backend's segment length g (codebook vectors are length g).
        seed: codebook stream seed (vq only).
    """

    kind: str
    bits: int
    group: int = 128
    block: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in QUANTIZER_KINDS:
            raise InvalidInputError(f"unknown quantizer kind {self.kind!r}")
        check_positive_int(self.bits, "bits")
        check_positive_int(self.group, "group")
        check_positive_int(self.block, "block")
        if self.kind == "codebook-vq" and self.bits * self.block > MAX_CODEBOOK_ADDRESS_BITS:
            raise TooLargeError(
                f"codebook address width bits*block = {self.bits * self.block} "
                f"exceeds {MAX_CODEBOOK_ADDRESS_BITS}"
            )

    def describe(self) -> str:
        if self.kind == "scalar-rtn":
            return f"scalar-rtn(bits={self.bits}, group={self.group})"
        return f"codebook-vq(bits={self.bits}, block={self.block}, seed={self.seed})"


def spec_from_string(text: str) -> QuantizerSpec:
    """Parse "KIND[:key=value,...]" (e.g. "scalar-rtn:bits=2,group=32").

    scalar-rtn takes bits and group; codebook-vq takes bits, block, seed.
    All values are integers; bits is required.

    Raises:
        InvalidInputError: unknown kind, unknown or malformed option.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    if kind not in QUANTIZER_KINDS:
        raise InvalidInputError(f"unknown quantizer kind {kind!r}; choose from {QUANTIZER_KINDS}")
    allowed = {"scalar-rtn": {"bits", "group"}, "codebook-vq": {"bits", "block", "seed"}}[kind]
    fields: dict[str, int] = {}
    if rest.strip():
        for item in rest.split(","):
            if "=" not in item:
                raise InvalidInputError(f"quantizer option {item.strip()!r} is not key=value")
            key, value = (part.strip() for part in item.split("=", 1))
            if key not in allowed:
                raise InvalidInputError(
                    f"quantizer {kind} does not take {key!r} (allowed: {sorted(allowed)})"
                )
            try:
                fields[key] = int(value)
            except ValueError as e:
                raise InvalidInputError(
                    f"quantizer option {key} expects an integer, got {value!r}"
                ) from e
    if "bits" not in fields:
        raise InvalidInputError(f"quantizer spec {text!r} must set bits")
    return QuantizerSpec(kind=kind, **fields)


def quantize_scalar(
    w: npt.NDArray[np.float64], bits: int, group: int
) -> npt.NDArray[np.float64]:
    """Groupwise absmax round-to-nearest-even quantization.

    Args:
        w: (rows, cols) matrix; ``group`` must divide cols.
        bits: code width k >= 1.
        group: segment length along each row.

    Returns:
        Dequantized matrix of the same shape: s * clamp(rhe(w / s)) per
        segment with s = absmax / 2^(k-1), s = 1 on all-zero segments.

    Raises:
        InvalidInputError: if group does not divide the column count.
    """
    w = check_matrix(w, "w")
    check_positive_int(bits, "bits")
    check_positive_int(group, "group")
    rows, cols = w.shape
    if cols % group != 0:
        raise InvalidInputError(f"group {group} does not divide column count {cols}")
    half = float(2 ** (bits - 1))
    segs = w.reshape(rows, cols // group, group)
    absmax = np.max(np.abs(segs), axis=2, keepdims=True)
    scale = np.where(absmax == 0.0, 1.0, absmax / half)
    codes = np.clip(np.rint(segs / scale), -half, half - 1.0)
    return (scale * codes).reshape(rows, cols)


@dataclass(frozen=True)
class Codebook:
    """Seeded Gaussian codebook, globally normalized to unit mean square.

    Attributes:
        bits: address bits per segment entry (2^(bits*block) codewords).
        block: codeword length g.
        seed: stream seed the entries were drawn from.
        entries: (2^(bits*block), block) float64 table.
    """

    bits: int
    block: int
    seed: int
    entries: npt.NDArray[np.float64]


@lru_cache(maxsize=32)
def _codebook_cached(seed: int, block: int, bits: int) -> Codebook:
    n_codes = 2 ** (bits * block)
    raw = SeededRng(seed).derive("codebook").gaussians(n_codes * block)
    rms = np.sqrt(np.mean(raw**2))
    entries = (raw / rms).reshape(n_codes, block)
    entries.setflags(write=False)
    return Codebook(bits=bits, block=block, seed=seed, entries=entries)


def make_codebook(seed: int, block: int, bits: int) -> Codebook:
    """Build (or fetch) the codebook for a seed, segment length, and width.

    Args:
        seed: stream seed.
        block: codeword length g >= 1.
        bits: address bits per entry; bits * block <= 12.

    Returns:
        Codebook with 2^(bits*block) rows scaled so the mean squared entry
        over the whole table is exactly 1.

    Raises:
        TooLargeError: if the table would exceed 4096 codewords.
    """
    check_positive_int(block, "block")
    check_positive_int(bits, "bits")
    if bits * block > MAX_CODEBOOK_ADDRESS_BITS:
        raise TooLargeError(
            f"codebook address width bits*block = {bits * block} exceeds "
            f"{MAX_CODEBOOK_ADDRESS_BITS}"
        )
    return _codebook_cached(seed, block, bits)


def quantize_vq(
    w: npt.NDArray[np.float64],
    codebook: Codebook,
    per_row_scale: bool = False,
) -> npt.NDArray[np.float64]:
    """Replace each length-g row segment with its nearest codeword.

    Distances are plain Euclidean; exact ties go to the lowest codeword
    index. With ``per_row_scale`` a single least-squares factor
    alpha = <w_r, c_r> / ||c_r||^2 rescales each reconstructed row (alpha = 1
    when the reconstruction is all zero).

    Args:
        w: (rows, cols) matrix; codebook.block must divide cols.
        codebook: table to assign against.
        per_row_scale: fit one scalar per row after assignment.

    Returns:
        Dequantized matrix of the same shape.
    """
    w = check_matrix(w, "w")
    g = codebook.block
    rows, cols = w.shape
    if cols % g != 0:
        raise InvalidInputError(f"codeword length {g} does not divide column count {cols}")
    segs = w.reshape(rows * (cols // g), g)
    entries = codebook.entries
    picked = np.empty(segs.shape[0], dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, entries.shape[0] * g))
    for lo in range(0, segs.shape[0], chunk):
        hi = min(lo + chunk, segs.shape[0])
        diff = segs[lo:hi, np.newaxis, :] - entries[np.newaxis, :, :]
        picked[lo:hi] = np.argmin(np.einsum("scg,scg->sc", diff, diff), axis=1)
    recon = entries[picked].reshape(rows, cols)
    if per_row_scale:
        num = np.einsum("rc,rc->r", w, recon)
        den = np.einsum("rc,rc->r", recon, recon)
        alpha = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 1.0)
        recon = alpha[:, np.newaxis] * recon
    return recon


def quantize(spec: QuantizerSpec, w: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Apply the quantizer a spec describes; deterministic in (spec, w)."""
    if spec.kind == "scalar-rtn":
        return quantize_scalar(w, spec.bits, spec.group)
    codebook = make_codebook(spec.seed, spec.block, spec.bits)
    return quantize_vq(w, codebook, per_row_scale=False)
