"""Structured orthogonal processors applied stage by stage.

A processor of one pass is T = S_{m-1} ... S_0 where stage t mixes every
contiguous digit group of stride s_t = b_0 ... b_{t-1} with its own b_t x b_t
orthogonal kernel. Applying a stage never materializes a permutation: the
input is reshaped to (n, g, b, s) with flat index i = alpha*(b*s) + r*s + beta,
transposed so the mixed digit is innermost, contracted against the per-block
kernels viewed as (g, s, b, b), and moved back. A length-d vector therefore
costs sum_t d * b_t multiplies per pass instead of d^2.

Conventions, fixed once for the whole library:
  * apply() treats rows as vectors and multiplies on the right:
    y = (x * signs) T. materialize(p) is the matrix M with apply(p, X) = X M,
    i.e. M = diag(signs) T, so signs scale rows of M.
  * Block c of stage t sits at c = alpha * s_t + beta and mixes coordinates
    {alpha*b_t*s_t + r*s_t + beta : r}.
  * Under this digit convention the zero-parameter product over a
    power-of-two schedule with Hadamard mixers equals the order-d
    Sylvester-Hadamard matrix directly (the digit-order permutation is the
    identity; any regrouping of digit positions conjugates that matrix into
    itself anyway).

For dimensions d = K * 2^L with K in the shipped sign-table orders, kronecker
mode reshapes each row to K x 2^L, runs the mixed-radix stages along the
power-of-two axis, and mixes the K axis with the exact sign table scaled by
K**-0.5. The zero-parameter materialization is then kron(H_K, H_{2^L}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import (
    AssumptionViolatedError,
    InvalidDimensionError,
    InvalidInputError,
    TooLargeError,
)
from .mixers import (
    SUPPORTED_TABLE_ORDERS,
    BaseMixer,
    is_power_of_two,
    mixer_for_radix,
    sign_table,
)
from .numerics import MAX_DENSE_DIM, SeededRng, rademacher
from .orthoparam import BlockParams, KernelCache, block_kernel_with_cache
from .schedule import Schedule
from .validation import check_positive_int, check_signs

MODES = ("mixed-radix", "kronecker")


class MultiplyCounter:
    """Accumulates the scalar multiplications the stage contractions perform."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += n


@dataclass
class HarpProcessor:
    """One side's processor: schedule, per-block angles, mixers, and signs.

    Attributes:
        schedule: stage schedule of the mixed-radix transform (the inner
            power-of-two transform in kronecker mode).
        passes: number of sequential parameter sets over the same schedule.
        params: params[p][t] lists the BlockParams of stage t in pass p,
            one entry per block, block order c = alpha * s_t + beta.
        mixers: per-stage fixed mixers, shared by all passes.
        signs: +-1 vector of length dim, applied once before the first stage.
        mode: "mixed-radix" or "kronecker".
        kron_k: sign-table order K in kronecker mode (dim = K * schedule.dim).
        sign_seed: stream seed the signs were drawn from, if any (metadata).
    """

    schedule: Schedule
    passes: int
    params: list[list[list[BlockParams]]]
    mixers: tuple[BaseMixer, ...]
    signs: npt.NDArray[np.float64]
    mode: str = "mixed-radix"
    kron_k: int | None = None
    sign_seed: int | None = None

    def __post_init__(self) -> None:
        check_positive_int(self.passes, "passes")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.mode == "kronecker":
            if self.kron_k is None or self.kron_k not in SUPPORTED_TABLE_ORDERS:
                raise InvalidInputError(
                    f"kronecker mode needs kron_k in {SUPPORTED_TABLE_ORDERS}, got {self.kron_k}"
                )
            if not is_power_of_two(self.schedule.dim):
                raise InvalidInputError(
                    f"kronecker inner schedule must factor a power of two, got {self.schedule.dim}"
                )
        elif self.kron_k is not None:
            raise InvalidInputError("kron_k is only meaningful in kronecker mode")
        if len(self.mixers) != self.schedule.stages:
            raise InvalidInputError(
                f"{len(self.mixers)} mixers for {self.schedule.stages} stages"
            )
        for t, (b, mixer) in enumerate(zip(self.schedule.radices, self.mixers)):
            if mixer.size != b:
                raise InvalidInputError(f"stage {t}: mixer order {mixer.size} != radix {b}")
        if len(self.params) != self.passes:
            raise InvalidInputError(f"{len(self.params)} parameter sets for {self.passes} passes")
        for q, stages in enumerate(self.params):
            if len(stages) != self.schedule.stages:
                raise InvalidInputError(f"pass {q}: {len(stages)} stages, expected {self.schedule.stages}")
            for t, blocks in enumerate(stages):
                b = self.schedule.radices[t]
                if len(blocks) != self.schedule.blocks(t):
                    raise InvalidInputError(
                        f"pass {q} stage {t}: {len(blocks)} blocks, expected {self.schedule.blocks(t)}"
                    )
                for bp in blocks:
                    if bp.radix != b:
                        raise InvalidInputError(
                            f"pass {q} stage {t}: block radix {bp.radix} != schedule radix {b}"
                        )
        self.signs = check_signs(self.signs, "signs", length=self.dim)

    @property
    def dim(self) -> int:
        if self.mode == "kronecker":
            return self.kron_k * self.schedule.dim
        return self.schedule.dim

    def flat_thetas(self) -> npt.NDArray[np.float64]:
        """All angles as one vector in (pass, stage, block, angle) order."""
        chunks = [bp.theta for stages in self.params for blocks in stages for bp in blocks]
        if not chunks:
            return np.zeros(0)
        return np.concatenate(chunks)

    def with_thetas(self, flat: npt.NDArray[np.float64]) -> "HarpProcessor":
        """Copy of this processor with angles replaced from a flat vector."""
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        new_params: list[list[list[BlockParams]]] = []
        pos = 0
        for stages in self.params:
            new_stages = []
            for blocks in stages:
                new_blocks = []
                for bp in blocks:
                    k = bp.theta.shape[0]
                    new_blocks.append(BlockParams(bp.radix, flat[pos : pos + k].copy()))
                    pos += k
                new_stages.append(new_blocks)
            new_params.append(new_stages)
        if pos != flat.shape[0]:
            raise InvalidInputError(f"flat theta length {flat.shape[0]}, processor needs {pos}")
        return HarpProcessor(
            schedule=self.schedule,
            passes=self.passes,
            params=new_params,
            mixers=self.mixers,
            signs=self.signs.copy(),
            mode=self.mode,
            kron_k=self.kron_k,
            sign_seed=self.sign_seed,
        )

    def is_zero(self) -> bool:
        return not any(
            np.any(bp.theta) for stages in self.params for blocks in stages for bp in blocks
        )


@dataclass
class ProcessorPair:
    """Output-side and input-side processors for one weight matrix.

    ``u`` acts on the d_out axis, ``v`` on the d_in axis: the rotated weight
    is U^T W V and the rotated curvature is V^T H V.
    """

    u: HarpProcessor
    v: HarpProcessor

    def with_thetas(
        self, flat_u: npt.NDArray[np.float64], flat_v: npt.NDArray[np.float64]
    ) -> "ProcessorPair":
        return ProcessorPair(self.u.with_thetas(flat_u), self.v.with_thetas(flat_v))


def zero_params(schedule: Schedule, passes: int = 1) -> list[list[list[BlockParams]]]:
    """All-zero parameter structure for a schedule."""
    return [
        [[BlockParams.zeros(b) for _ in range(schedule.blocks(t))]
         for t, b in enumerate(schedule.radices)]
        for _ in range(passes)
    ]


def init_zero(
    schedule: Schedule,
    mixers: tuple[BaseMixer, ...] | None = None,
    signs: npt.NDArray[np.float64] | None = None,
    *,
    passes: int = 1,
    mode: str = "mixed-radix",
    kron_k: int | None = None,
    sign_rng: SeededRng | None = None,
) -> HarpProcessor:
    """Processor at the zero parameterization.

    Args:
        schedule: stage schedule (inner schedule in kronecker mode).
        mixers: per-stage mixers; defaults to Hadamard where the radix is a
            power of two and the radix-keyed fallback elsewhere.
        signs: explicit +-1 vector; overrides sign_rng.
        passes: independent parameter sets, >= 1.
        mode: "mixed-radix" or "kronecker".
        kron_k: sign-table order when mode is "kronecker".
        sign_rng: stream to draw signs from; all +1 when neither signs nor
            sign_rng is given.

    Returns:
        HarpProcessor with every angle zero.
    """
    if mixers is None:
        mixers = tuple(mixer_for_radix(b) for b in schedule.radices)
    dim = (kron_k or 1) * schedule.dim if mode == "kronecker" else schedule.dim
    seed = None
    if signs is None:
        if sign_rng is not None:
            signs = rademacher(sign_rng, dim)
            seed = sign_rng.seed
        else:
            signs = np.ones(dim)
    return HarpProcessor(
        schedule=schedule,
        passes=passes,
        params=zero_params(schedule, passes),
        mixers=mixers,
        signs=signs,
        mode=mode,
        kron_k=kron_k,
        sign_seed=seed,
    )


# ============================================================================
# Stage machinery
# ============================================================================


def stage_kernels(
    p: HarpProcessor, pass_idx: int, t: int
) -> tuple[npt.NDArray[np.float64], list[KernelCache]]:
    """Kernels of one stage as a (blocks, b, b) array plus adjoint caches."""
    blocks = p.params[pass_idx][t]
    mixer = p.mixers[t]
    b = p.schedule.radices[t]
    kernels = np.empty((len(blocks), b, b), dtype=np.float64)
    caches: list[KernelCache] = []
    for c, bp in enumerate(blocks):
        kernels[c], cache = block_kernel_with_cache(bp, mixer)
        caches.append(cache)
    return kernels, caches


def run_stage(
    x: npt.NDArray[np.float64],
    kernels: npt.NDArray[np.float64],
    b: int,
    s: int,
    *,
    transpose_kernels: bool = False,
    counter: MultiplyCounter | None = None,
) -> npt.NDArray[np.float64]:
    """Right-multiply rows of x by one stage's block-diagonal operator.

    Args:
        x: (n, d) input rows.
        kernels: (d/b, b, b) per-block kernels, block c = alpha * s + beta.
        b: stage radix.
        s: stage stride.
        transpose_kernels: contract against B^T instead of B (used by the
            transpose apply and the backward sweep).
        counter: optional multiply accounting.

    Returns:
        (n, d) output rows.
    """
    n, d = x.shape
    g = d // (b * s)
    x4 = x.reshape(n, g, b, s)
    xh = x4.transpose(0, 1, 3, 2)
    k4 = kernels.reshape(g, s, b, b)
    if transpose_kernels:
        yh = np.einsum("ngsc,gsbc->ngsb", xh, k4)
    else:
        yh = np.einsum("ngsb,gsbc->ngsc", xh, k4)
    if counter is not None:
        counter.add(n * g * s * b * b)
    return yh.transpose(0, 1, 3, 2).reshape(n, d)


def _kron_table(k: int) -> npt.NDArray[np.float64]:
    return sign_table(k).astype(np.float64) / np.sqrt(float(k))


def _kron_mix(
    x: npt.NDArray[np.float64],
    k: int,
    n2: int,
    *,
    transpose: bool = False,
    counter: MultiplyCounter | None = None,
) -> npt.NDArray[np.float64]:
    """Right-multiply rows by H_K (x) I_{n2} via the K x n2 reshape."""
    n = x.shape[0]
    table = _kron_table(k)
    x3 = x.reshape(n, k, n2)
    if transpose:
        y3 = np.einsum("nkj,lk->nlj", x3, table)
    else:
        y3 = np.einsum("nkj,kl->nlj", x3, table)
    if counter is not None:
        counter.add(n * n2 * k * k)
    return y3.reshape(n, k * n2)


def _check_input(p: HarpProcessor, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != p.dim:
        raise InvalidInputError(f"input shape {np.shape(x)} does not end in dim {p.dim}")
    return arr


def apply(
    p: HarpProcessor,
    x: npt.ArrayLike,
    counter: MultiplyCounter | None = None,
) -> npt.NDArray[np.float64]:
    """Transform rows: y = (x * signs) T, stages of pass 0 first.

    Args:
        p: processor.
        x: (n, dim) rows, or a single length-dim vector.
        counter: optional multiply accounting.

    Returns:
        Transformed rows with the input's shape (1-D in, 1-D out).
    """
    arr = _check_input(p, x)
    single = np.ndim(x) == 1
    y = arr * p.signs[np.newaxis, :]
    if p.mode == "kronecker":
        n = y.shape[0]
        n2 = p.schedule.dim
        inner = y.reshape(n * p.kron_k, n2)
        for q in range(p.passes):
            for t, b in enumerate(p.schedule.radices):
                kernels, _ = stage_kernels(p, q, t)
                inner = run_stage(inner, kernels, b, p.schedule.strides[t], counter=counter)
        y = _kron_mix(inner.reshape(n, p.dim), p.kron_k, n2, counter=counter)
    else:
        for q in range(p.passes):
            for t, b in enumerate(p.schedule.radices):
                kernels, _ = stage_kernels(p, q, t)
                y = run_stage(y, kernels, b, p.schedule.strides[t], counter=counter)
    return y[0] if single else y


def apply_transpose(
    p: HarpProcessor,
    x: npt.ArrayLike,
    counter: MultiplyCounter | None = None,
) -> npt.NDArray[np.float64]:
    """Inverse transform rows: y = (x T^T) * signs.

    Exact inverse of apply up to roundoff since T is orthogonal.
    """
    arr = _check_input(p, x)
    single = np.ndim(x) == 1
    y = arr
    if p.mode == "kronecker":
        n = y.shape[0]
        n2 = p.schedule.dim
        y = _kron_mix(y, p.kron_k, n2, transpose=True, counter=counter)
        inner = y.reshape(n * p.kron_k, n2)
        for q in reversed(range(p.passes)):
            for t in reversed(range(p.schedule.stages)):
                kernels, _ = stage_kernels(p, q, t)
                inner = run_stage(
                    inner,
                    kernels,
                    p.schedule.radices[t],
                    p.schedule.strides[t],
                    transpose_kernels=True,
                    counter=counter,
                )
        y = inner.reshape(n, p.dim)
    else:
        for q in reversed(range(p.passes)):
            for t in reversed(range(p.schedule.stages)):
                kernels, _ = stage_kernels(p, q, t)
                y = run_stage(
                    y,
                    kernels,
                    p.schedule.radices[t],
                    p.schedule.strides[t],
                    transpose_kernels=True,
                    counter=counter,
                )
    y = y * p.signs[np.newaxis, :]
    return y[0] if single else y


def materialize(p: HarpProcessor) -> npt.NDArray[np.float64]:
    """Dense matrix M with apply(p, X) = X M; refuses dim > 4096.

    Raises:
        TooLargeError: if the processor dimension exceeds the desk cap.
    """
    if p.dim > MAX_DENSE_DIM:
        raise TooLargeError(f"materialize supports dim <= {MAX_DENSE_DIM}, got {p.dim}")
    return apply(p, np.eye(p.dim))


# ============================================================================
# Exact-equivalence checks and kronecker selection
# ============================================================================


def _sylvester_dense(d: int) -> npt.NDArray[np.float64]:
    h = np.ones((1, 1))
    while h.shape[0] < d:
        h = np.block([[h, h], [h, -h]])
    return h / np.sqrt(float(d))


def rht_equivalence_check(p: HarpProcessor) -> dict:
    """Compare the zero-parameter processor against its dense Hadamard form.

    For a mixed-radix processor over power-of-two radices with Hadamard
    mixers at the zero parameterization, the materialized matrix must equal
    diag(signs) H_d (the digit-order permutation of the stage convention is
    the identity). In kronecker mode the target is
    diag(signs) kron(H_K, H_{2^L}).

    Args:
        p: processor to check; must satisfy the regime above.

    Returns:
        Report dict with keys dim, mode, passes, permutation ("identity"),
        max_abs_error, and target_norm.

    Raises:
        AssumptionViolatedError: if any angle is nonzero, any mixer is not
            Hadamard, or a radix is not a power of two.
        TooLargeError: if the dimension exceeds the dense cap.
    """
    if not p.is_zero():
        raise AssumptionViolatedError("equivalence check requires all angles zero")
    for t, mixer in enumerate(p.mixers):
        if mixer.kind != "hadamard":
            raise AssumptionViolatedError(f"stage {t} mixer kind {mixer.kind!r} is not hadamard")
    for t, b in enumerate(p.schedule.radices):
        if not is_power_of_two(b):
            raise AssumptionViolatedError(f"stage {t} radix {b} is not a power of two")
    inner = _sylvester_dense(p.schedule.dim)
    stacked = inner
    for _ in range(p.passes - 1):
        stacked = stacked @ inner
    if p.mode == "kronecker":
        target = np.kron(_kron_table(p.kron_k), stacked)
    else:
        target = stacked
    target = p.signs[:, np.newaxis] * target
    got = materialize(p)
    err = float(np.max(np.abs(got - target)))
    return {
        "dim": p.dim,
        "mode": p.mode,
        "passes": p.passes,
        "permutation": "identity",
        "max_abs_error": err,
        "target_norm": float(np.max(np.abs(target))),
    }


def select_kron_factorization(d: int) -> tuple[int, int]:
    """Smallest shipped sign-table order K with d / K a power of two.

    Args:
        d: dimension, >= 2.

    Returns:
        (K, L) with d = K * 2**L.

    Raises:
        InvalidDimensionError: if no shipped order works.
    """
    check_positive_int(d, "d", minimum=2)
    for k in SUPPORTED_TABLE_ORDERS:
        if d % k == 0 and is_power_of_two(d // k):
            return k, (d // k).bit_length() - 1
    raise InvalidDimensionError(
        f"{d} does not factor as K * 2^L for any shipped table order {SUPPORTED_TABLE_ORDERS}"
    )
