"""Exception types shared across the library.

Every error raised on a contract violation derives from HarpError so callers
can catch one base type. The CLI maps these onto exit codes: config and usage
problems exit 2, numeric failures exit 3, file-format problems exit 4.
"""

from __future__ import annotations


class HarpError(Exception):
    """Base class for all library errors."""


class InvalidInputError(HarpError):
    """An argument failed validation (shape, dtype, finiteness, range)."""


class InvalidDimensionError(InvalidInputError):
    """A dimension is out of the supported range."""


class InvalidRadixError(InvalidInputError):
    """A radix list is malformed or inconsistent with the dimension."""


class InvalidBlockError(InvalidInputError):
    """Block parameters do not match the radix they claim."""


class SingularSystemError(HarpError):
    """A linear system had no usable solution."""


class NoTableAvailableError(HarpError):
    """No sign table is shipped for the requested order."""


class TooLargeError(HarpError):
    """The request exceeds the documented desk-scale limit."""


class FormatError(HarpError):
    """A serialized payload is malformed or truncated."""


class AssumptionViolatedError(HarpError):
    """A check was invoked outside the regime where its claim holds."""


class UndefinedMetricError(HarpError):
    """A diagnostic is undefined for the given input (e.g. zero matrix)."""


class InvalidTapeError(HarpError):
    """A gradient tape does not match the processor it is replayed against."""


class NotFittedError(HarpError):
    """A fitted artifact was requested before fit ran."""
