"""Processor serialization: the little-endian "HRP1" container.

Layout, in file order (all integers little-endian):

    magic      4 bytes   b"HRP1" (trailing digit = format version)
    mode       u8        0 = mixed-radix, 1 = kronecker
    payload    u8        0 = float32 angles, 1 = int8 codes + float32 scales
    d          u64       full transform order
    kron_k     u64       sign-table order (0 in mixed-radix mode)
    passes     u64
    m          u64       stage count of the (inner) schedule
    radices    m x u64   innermost stage first
    seed flag  u8        1 when a sign-stream seed is recorded
    sign seed  u64       present only when the flag is 1
    signs      ceil(d/8) bytes, LSB-first bits, 1 means -1
    mixers     m x (kind u8 + seed u64); kind 0 = hadamard, 1 = qr-fallback,
               2 = identity; the seed field is 0 and ignored unless kind = 1
    angles     payload 0: all angles as f32 in (pass, stage, block, angle)
               order; payload 1: all per-block scales as f32 in (pass,
               stage, block) order, then all codes as i8 in angle order

Angles are stored at single precision, so saving narrows double-precision
fits; save(load(bytes)) reproduces the bytes exactly, and load(save(p))
reproduces p exactly whenever p's angles are float32-representable (zero
processors and anything loaded from a file always are).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError, HarpError, InvalidInputError
from .mixers import SUPPORTED_TABLE_ORDERS, mixer_from_record
from .orthoparam import BlockParams, n_params
from .packing import PackedProcessor
from .schedule import Schedule
from .transform import HarpProcessor

PROCESSOR_MAGIC = b"HRP1"
_MODE_CODES = {"mixed-radix": 0, "kronecker": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}
_KIND_CODES = {"hadamard": 0, "qr-fallback": 1, "identity": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _pack_signs(signs: np.ndarray) -> bytes:
    bits = (signs < 0).astype(np.uint8)
    return np.packbits(bits, bitorder="little").tobytes()


def _unpack_signs(buf: bytes, d: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")[:d]
    return np.where(bits == 1, -1.0, 1.0)


def save_processor(path: str | Path, p: Union[HarpProcessor, PackedProcessor]) -> None:
    """Write a processor (either payload kind) to an HRP1 file."""
    packed = isinstance(p, PackedProcessor)
    if not packed and not isinstance(p, HarpProcessor):
        raise InvalidInputError(f"expected a processor or packed processor, got {type(p).__name__}")
    out = bytearray()
    out += PROCESSOR_MAGIC
    out += struct.pack("<BB", _MODE_CODES[p.mode], int(packed))
    out += struct.pack("<QQQQ", p.dim, p.kron_k or 0, p.passes, p.schedule.stages)
    out += struct.pack(f"<{p.schedule.stages}Q", *p.schedule.radices)
    if p.sign_seed is None:
        out += struct.pack("<B", 0)
    else:
        out += struct.pack("<BQ", 1, p.sign_seed & 0xFFFFFFFFFFFFFFFF)
    out += _pack_signs(np.asarray(p.signs))
    for mix in p.mixers:
        seed = mix.seed if (mix.kind == "qr-fallback" and mix.seed is not None) else 0
        out += struct.pack("<BQ", _KIND_CODES[mix.kind], seed)
    if packed:
        for pas in range(p.passes):
            for t in range(p.schedule.stages):
                out += p.scales[pas][t].astype("<f4", copy=False).tobytes()
        for pas in range(p.passes):
            for t in range(p.schedule.stages):
                out += p.codes[pas][t].tobytes()
    else:
        flat = p.flat_thetas().astype("<f4")
        out += flat.tobytes()
    Path(path).write_bytes(bytes(out))


def _need(buf: bytes, offset: int, count: int, what: str) -> int:
    if len(buf) - offset < count:
        raise FormatError(
            f"truncated processor file: {what} at byte {offset} needs {count} bytes, "
            f"only {len(buf) - offset} remain"
        )
    return offset + count


def load_processor(path: str | Path) -> Union[HarpProcessor, PackedProcessor]:
    """Read an HRP1 file; returns whichever payload kind was stored.

    Raises:
        FormatError: bad magic/version, unknown codes, truncation, trailing
            bytes, or a structurally inconsistent processor.
    """
    buf = Path(path).read_bytes()
    off = _need(buf, 0, 4, "magic")
    if buf[:4] != PROCESSOR_MAGIC:
        raise FormatError(f"bad magic/version: expected {PROCESSOR_MAGIC!r}, got {buf[:4]!r}")
    end = _need(buf, off, 2 + 4 * 8, "header")
    mode_code, payload_code = struct.unpack_from("<BB", buf, off)
    d, kron_k, passes, m = struct.unpack_from("<QQQQ", buf, off + 2)
    off = end
    if mode_code not in _MODE_NAMES:
        raise FormatError(f"unknown mode code {mode_code}")
    if payload_code not in (0, 1):
        raise FormatError(f"unknown payload code {payload_code}")
    mode = _MODE_NAMES[mode_code]
    end = _need(buf, off, 8 * m, "radices")
    radices = struct.unpack_from(f"<{m}Q", buf, off)
    off = end
    end = _need(buf, off, 1, "sign-seed flag")
    (flag,) = struct.unpack_from("<B", buf, off)
    off = end
    sign_seed = None
    if flag == 1:
        end = _need(buf, off, 8, "sign seed")
        (sign_seed,) = struct.unpack_from("<Q", buf, off)
        off = end
    elif flag != 0:
        raise FormatError(f"sign-seed flag must be 0 or 1, got {flag}")
    nbytes = (d + 7) // 8
    end = _need(buf, off, nbytes, "sign bitfield")
    signs = _unpack_signs(buf[off:end], d)
    off = end
    mixers = []
    for t in range(m):
        end = _need(buf, off, 9, f"mixer record {t}")
        kind_code, seed = struct.unpack_from("<BQ", buf, off)
        off = end
        if kind_code not in _KIND_NAMES:
            raise FormatError(f"unknown mixer kind code {kind_code} for stage {t}")
        kind = _KIND_NAMES[kind_code]
        try:
            mixers.append(mixer_from_record(kind, int(radices[t]), seed if kind_code == 1 else None))
        except HarpError as e:
            raise FormatError(f"stage {t} mixer cannot be rebuilt: {e}") from e

    if mode == "kronecker":
        if kron_k not in SUPPORTED_TABLE_ORDERS or kron_k == 0:
            raise FormatError(f"kronecker file with unsupported table order {kron_k}")
        if d % kron_k != 0:
            raise FormatError(f"d={d} is not divisible by kron_k={kron_k}")
        inner = d // kron_k
    else:
        if kron_k != 0:
            raise FormatError(f"mixed-radix file must store kron_k=0, got {kron_k}")
        inner = d
    try:
        schedule = Schedule(int(inner), tuple(int(b) for b in radices))
    except HarpError as e:
        raise FormatError(f"inconsistent schedule in file: {e}") from e

    blocks = [schedule.blocks(t) for t in range(m)]
    angles = [n_params(b) for b in schedule.radices]
    common = dict(
        schedule=schedule,
        passes=int(passes),
        mixers=tuple(mixers),
        signs=signs,
        mode=mode,
        kron_k=int(kron_k) if mode == "kronecker" else None,
        sign_seed=sign_seed,
    )
    try:
        if payload_code == 1:
            scales: list[tuple] = []
            for _ in range(passes):
                row = []
                for t in range(m):
                    end = _need(buf, off, 4 * blocks[t], "scales")
                    row.append(np.frombuffer(buf, dtype="<f4", count=blocks[t], offset=off).copy())
                    off = end
                scales.append(tuple(row))
            codes: list[tuple] = []
            for _ in range(passes):
                row = []
                for t in range(m):
                    count = blocks[t] * angles[t]
                    end = _need(buf, off, count, "codes")
                    arr = np.frombuffer(buf, dtype=np.int8, count=count, offset=off)
                    row.append(arr.reshape(blocks[t], angles[t]).copy())
                    off = end
                codes.append(tuple(row))
            if len(buf) != off:
                raise FormatError(f"trailing bytes: expected file length {off}, got {len(buf)}")
            return PackedProcessor(scales=tuple(scales), codes=tuple(codes), **common)
        n_theta = passes * sum(blocks[t] * angles[t] for t in range(m))
        end = _need(buf, off, 4 * n_theta, "angles")
        flat = np.frombuffer(buf, dtype="<f4", count=n_theta, offset=off).astype(np.float64)
        off = end
        if len(buf) != off:
            raise FormatError(f"trailing bytes: expected file length {off}, got {len(buf)}")
        params = []
        pos = 0
        for _ in range(passes):
            pass_params = []
            for t, b in enumerate(schedule.radices):
                stage = []
                for _c in range(blocks[t]):
                    stage.append(BlockParams(radix=b, theta=flat[pos : pos + angles[t]]))
                    pos += angles[t]
                pass_params.append(stage)
            params.append(pass_params)
        return HarpProcessor(params=params, **common)
    except FormatError:
        raise
    except HarpError as e:
        raise FormatError(f"inconsistent processor in file: {e}") from e
