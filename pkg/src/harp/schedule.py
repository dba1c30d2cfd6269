"""Mixed-radix stage schedules.

A schedule factors a dimension d into radices (b_0, ..., b_{m-1}) with
d = prod(b_t). Stage t works on contiguous digit groups of stride
s_t = b_0 * ... * b_{t-1}, so every coordinate is mixed by exactly one block
per stage and by every stage once across a pass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import InvalidDimensionError, InvalidRadixError
from .validation import check_positive_int

# Residual factors above this order get a fallback mixer whose dense cost
# grows quadratically; still correct, just no longer cheap.
LARGE_RESIDUAL = 64


@dataclass(frozen=True)
class Schedule:
    """Factorization of a dimension into per-stage radices.

    Attributes:
        dim: the dimension being factored.
        radices: per-stage block sizes, each >= 2, product equal to dim.
    """

    dim: int
    radices: tuple[int, ...]
    strides: tuple[int, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        check_positive_int(self.dim, "dim", minimum=2)
        radices = tuple(int(b) for b in self.radices)
        object.__setattr__(self, "radices", radices)
        problems = validate(self.dim, radices)
        if problems:
            raise InvalidRadixError(f"invalid schedule for d={self.dim}: {problems[0]}")
        strides = []
        acc = 1
        for b in radices:
            strides.append(acc)
            acc *= b
        object.__setattr__(self, "strides", tuple(strides))

    @property
    def stages(self) -> int:
        return len(self.radices)

    def blocks(self, t: int) -> int:
        """Number of independent blocks at stage t (= dim / radices[t])."""
        return self.dim // self.radices[t]


def validate(dim: int, radices: tuple[int, ...]) -> list[str]:
    """Check a radix list against a dimension.

    Args:
        dim: dimension the schedule claims to factor.
        radices: candidate per-stage radices.

    Returns:
        List of violation descriptions, first violation first; empty when the
        schedule is valid.
    """
    problems: list[str] = []
    if dim < 2:
        problems.append(f"dim must be >= 2, got {dim}")
    if len(radices) == 0:
        problems.append("radix list is empty")
    for t, b in enumerate(radices):
        if b < 2:
            problems.append(f"radix[{t}] = {b} is < 2")
    prod = math.prod(radices) if radices else 0
    if radices and prod != dim:
        problems.append(f"radix product {prod} != dim {dim}")
    return problems


def greedy_schedule(d: int, b_base: int = 8, b_max: int = 8) -> Schedule:
    """Factor d greedily: peel b_base while it divides, then smaller factors.

    After b_base stops dividing, factors are tried from min(b_max, remainder)
    down to 2, peeling each while it divides; whatever remains past that is
    appended as a single residual stage. A residual above LARGE_RESIDUAL gets
    a warning since its dense block cost is quadratic.

    Args:
        d: dimension to factor, d >= 2.
        b_base: preferred radix, >= 2.
        b_max: largest radix tried after the preferred one, >= 2.

    Returns:
        Schedule with radix product exactly d.

    Raises:
        InvalidDimensionError: if d < 2.
        InvalidRadixError: if b_base or b_max is < 2.
    """
    if d < 2:
        raise InvalidDimensionError(f"greedy_schedule needs d >= 2, got {d}")
    if b_base < 2 or b_max < 2:
        raise InvalidRadixError(f"radix bounds must be >= 2, got base={b_base} max={b_max}")
    radices: list[int] = []
    rem = d
    while rem % b_base == 0:
        radices.append(b_base)
        rem //= b_base
    f = min(b_max, rem)
    while f >= 2:
        while rem % f == 0:
            radices.append(f)
            rem //= f
        f = min(f - 1, rem)
    if rem != 1:
        if rem > LARGE_RESIDUAL:
            warnings.warn(
                f"residual radix {rem} exceeds {LARGE_RESIDUAL}; its dense block "
                "makes the stage cost quadratic",
                RuntimeWarning,
                stacklevel=2,
            )
        radices.append(rem)
    return Schedule(d, tuple(radices))


def param_count(schedule: Schedule, passes: int = 1) -> int:
    """Learnable angle count for a schedule: sum over stages of d(b_t - 1)/2.

    Each stage holds d/b_t blocks of b_t(b_t - 1)/2 angles (a single Givens
    angle when b_t = 2), and independent passes repeat the full set.

    Args:
        schedule: stage schedule.
        passes: number of independent parameter sets, >= 1.

    Returns:
        Total number of scalar parameters.
    """
    check_positive_int(passes, "passes")
    per_pass = 0
    for b in schedule.radices:
        per_pass += (schedule.dim // b) * (b * (b - 1) // 2)
    return passes * per_pass


def multiply_count(schedule: Schedule, passes: int = 1) -> int:
    """Multiplications one pass-stack spends per transformed vector: sum d*b_t."""
    check_positive_int(passes, "passes")
    return passes * sum(schedule.dim * b for b in schedule.radices)
