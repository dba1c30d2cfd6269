"""Int8 storage of processor angles and bits-per-parameter accounting.

Each block's angles are stored as one float32 scale s = max|a|/127 plus
int8 codes q = round-half-even(a/s) clamped to [-127, 127]; all-zero blocks
get s = 0 and q = 0 so an unfitted processor survives packing bit-exactly.
Reconstruction is a = s*q with |a - s*q| <= s/2 plus a rounding ulp.

Overhead accounting charges the angle payload plus per-processor metadata
(sign bits, and the float32 scales when packed) against the layer's
d_out*d_in weight entries.  Fixed-size structure fields (radices, mode,
mixer seeds) are excluded: they are O(stages) bytes regardless of layer
size.  Sign vectors are charged even though pure sign-flip transforms are
often quoted at the nominal bitrate; the accounting here prefers to count
every stored bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
import numpy.typing as npt

from .errors import InvalidInputError
from .orthoparam import BlockParams, n_params
from .schedule import Schedule
from .transform import MODES, HarpProcessor, ProcessorPair

INT8_LEVELS = 127


@dataclass(frozen=True)
class PackedProcessor:
    """A processor with its angle payload replaced by int8 codes.

    scales[p][t] holds one float32 per block of stage t in pass p;
    codes[p][t] has shape (blocks, angles-per-block) in the same strict
    upper-triangle order the unpacked parameters use.
    """

    schedule: Schedule
    passes: int
    mixers: tuple
    signs: npt.NDArray[np.float64]
    mode: str
    kron_k: int | None
    sign_seed: int | None
    scales: tuple[tuple[npt.NDArray[np.float32], ...], ...]
    codes: tuple[tuple[npt.NDArray[np.int8], ...], ...]

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if len(self.scales) != self.passes or len(self.codes) != self.passes:
            raise InvalidInputError("payload pass count does not match passes")
        for p in range(self.passes):
            if len(self.scales[p]) != self.schedule.stages or len(self.codes[p]) != self.schedule.stages:
                raise InvalidInputError("payload stage count does not match the schedule")
            for t, b in enumerate(self.schedule.radices):
                blocks = self.schedule.blocks(t)
                s = self.scales[p][t]
                q = self.codes[p][t]
                if s.shape != (blocks,) or s.dtype != np.float32:
                    raise InvalidInputError(f"stage {t} scales must be float32 of shape ({blocks},)")
                if q.shape != (blocks, n_params(b)) or q.dtype != np.int8:
                    raise InvalidInputError(
                        f"stage {t} codes must be int8 of shape ({blocks}, {n_params(b)})"
                    )
                if not np.all(np.isfinite(s)) or np.any(s < 0):
                    raise InvalidInputError(f"stage {t} scales must be finite and >= 0")
                if np.any(np.abs(q.astype(np.int16)) > INT8_LEVELS):
                    raise InvalidInputError(f"stage {t} codes exceed +-{INT8_LEVELS}")

    @property
    def dim(self) -> int:
        if self.mode == "kronecker":
            return self.kron_k * self.schedule.dim
        return self.schedule.dim

    def n_angles(self) -> int:
        return sum(q.size for pas in self.codes for q in pas)

    def n_blocks(self) -> int:
        return sum(s.size for pas in self.scales for s in pas)


def pack_block(theta: npt.NDArray[np.float64]) -> tuple[np.float32, npt.NDArray[np.int8]]:
    """One block: float32 scale max|a|/127 and half-even int8 codes."""
    absmax = float(np.max(np.abs(theta))) if theta.size else 0.0
    scale = np.float32(absmax / INT8_LEVELS)
    if scale == 0:
        return scale, np.zeros(theta.shape, dtype=np.int8)
    q = np.clip(np.rint(theta / np.float64(scale)), -INT8_LEVELS, INT8_LEVELS)
    return scale, q.astype(np.int8)


def pack_int8(p: HarpProcessor) -> PackedProcessor:
    """Quantize every block's angles to int8 with a per-block float32 scale."""
    scales: list[tuple[npt.NDArray[np.float32], ...]] = []
    codes: list[tuple[npt.NDArray[np.int8], ...]] = []
    for pass_params in p.params:
        pass_scales = []
        pass_codes = []
        for stage_params in pass_params:
            s_list = []
            q_list = []
            for bp in stage_params:
                s, q = pack_block(bp.theta)
                s_list.append(s)
                q_list.append(q)
            pass_scales.append(np.array(s_list, dtype=np.float32))
            pass_codes.append(np.stack(q_list).astype(np.int8))
        scales.append(tuple(pass_scales))
        codes.append(tuple(pass_codes))
    return PackedProcessor(
        schedule=p.schedule,
        passes=p.passes,
        mixers=p.mixers,
        signs=p.signs,
        mode=p.mode,
        kron_k=p.kron_k,
        sign_seed=p.sign_seed,
        scales=tuple(scales),
        codes=tuple(codes),
    )


def unpack(pp: PackedProcessor) -> HarpProcessor:
    """Rebuild a processor with angles a = scale * code."""
    params = []
    for p in range(pp.passes):
        pass_params = []
        for t, b in enumerate(pp.schedule.radices):
            s = pp.scales[p][t].astype(np.float64)
            q = pp.codes[p][t].astype(np.float64)
            thetas = s[:, np.newaxis] * q
            pass_params.append([BlockParams(radix=b, theta=thetas[c]) for c in range(thetas.shape[0])])
        params.append(pass_params)
    return HarpProcessor(
        schedule=pp.schedule,
        passes=pp.passes,
        params=params,
        mixers=pp.mixers,
        signs=pp.signs,
        mode=pp.mode,
        kron_k=pp.kron_k,
        sign_seed=pp.sign_seed,
    )


def storage_bits(obj: Union[HarpProcessor, PackedProcessor]) -> dict[str, int]:
    """Stored-bit breakdown for one processor.

    Angles count at 32 bits each unpacked and 8 bits packed; packed form
    adds one 32-bit scale per block; signs cost one bit per coordinate.
    Fixed-size structure fields are excluded (see module docstring).
    """
    if isinstance(obj, PackedProcessor):
        payload = 8 * obj.n_angles()
        scale_bits = 32 * obj.n_blocks()
    elif isinstance(obj, HarpProcessor):
        payload = 32 * len(obj.flat_thetas())
        scale_bits = 0
    else:
        raise InvalidInputError(f"expected a processor or packed processor, got {type(obj).__name__}")
    sign_bits = obj.dim
    return {
        "payload_bits": payload,
        "scale_bits": scale_bits,
        "sign_bits": sign_bits,
        "total_bits": payload + scale_bits + sign_bits,
    }


ProcessorLike = Union[HarpProcessor, PackedProcessor]


def overhead_bpp(
    procs: Union[ProcessorLike, ProcessorPair, Iterable[ProcessorLike]],
    d_out: int,
    d_in: int,
    base_bits: float = 0.0,
) -> float:
    """Effective bits per weight: base_bits plus amortized processor storage.

    Args:
        procs: one processor, a pair, or any iterable of (packed) processors
            whose storage is amortized over this layer.
        d_out: weight rows.
        d_in: weight columns.
        base_bits: nominal bits per weight of the quantizer itself.

    Returns:
        base_bits + total stored bits / (d_out * d_in).
    """
    if d_out < 1 or d_in < 1:
        raise InvalidInputError("layer dims must be >= 1")
    if isinstance(procs, ProcessorPair):
        items: list[ProcessorLike] = [procs.u, procs.v]
    elif isinstance(procs, (HarpProcessor, PackedProcessor)):
        items = [procs]
    else:
        items = list(procs)
    total = sum(storage_bits(p)["total_bits"] for p in items)
    return base_bits + total / float(d_out * d_in)
