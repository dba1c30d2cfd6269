"""Learnable structured orthogonal processors for low-bit quantization.

The package factors a d-dimensional orthogonal transform into a short
sequence of block-diagonal stages over a mixed-radix digit decomposition.
At the zero parameterization the transform collapses to a signed Hadamard
(the classical randomized incoherence preprocessor); fitting the per-block
rotation angles against a layer's weight and curvature tightens low-bit
quantization further at O(d log d) apply cost and tiny parameter overhead.

Typical flow:

    >>> from harp import SyntheticSpec, gen_problem, HarpRotation
    >>> prob = gen_problem(SyntheticSpec(d_in=32, d_out=32, seed=0))
    >>> est = HarpRotation(steps=200, quantizer="scalar-rtn:bits=2,group=32")
    >>> est.fit(prob.w, prob.h)                         # doctest: +ELLIPSIS
    HarpRotation(...)
    >>> w_hat = est.quantize_weight(prob.w)

The same machinery is scriptable through the ``harp`` command line tool.
"""

from .errors import (
    AssumptionViolatedError,
    FormatError,
    HarpError,
    InvalidBlockError,
    InvalidDimensionError,
    InvalidInputError,
    InvalidRadixError,
    InvalidTapeError,
    NoTableAvailableError,
    NotFittedError,
    SingularSystemError,
    TooLargeError,
    UndefinedMetricError,
)
from .numerics import SeededRng, qr_orthogonal, rademacher, solve_linear, sym_eig
from .schedule import Schedule, greedy_schedule, multiply_count, param_count
from .mixers import (
    BaseMixer,
    SUPPORTED_TABLE_ORDERS,
    fallback_mixer,
    hadamard_mixer,
    identity_mixer,
    mixer_for_radix,
    sign_table,
    sylvester_hadamard,
)
from .orthoparam import BlockParams, block_kernel, cayley, givens, n_params
from .transform import (
    HarpProcessor,
    MultiplyCounter,
    ProcessorPair,
    apply,
    apply_transpose,
    init_zero,
    materialize,
    rht_equivalence_check,
    select_kron_factorization,
)
from .gradcore import apply_with_tape, finite_diff_check, layer_grads, rotate_with_tapes, vjp
from .quantizers import (
    Codebook,
    QuantizerSpec,
    make_codebook,
    quantize,
    quantize_scalar,
    quantize_vq,
    spec_from_string,
)
from .fitting import (
    FitConfig,
    FitTrace,
    LayerProblem,
    evaluate_losses,
    fit_layer,
    rotate_layer,
)
from .diagnostics import (
    DiagnosticsReport,
    invariance_check,
    mu_h,
    mu_w,
    offblock_fraction,
    proxy_loss,
    run_battery,
    unrotate_weight,
)
from .packing import PackedProcessor, overhead_bpp, pack_int8, storage_bits, unpack
from .problems import SyntheticSpec, gen_problem, read_tensor, write_tensor
from .procfile import load_processor, save_processor
from .estimator import HarpRotation

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolatedError",
    "BaseMixer",
    "BlockParams",
    "Codebook",
    "DiagnosticsReport",
    "FitConfig",
    "FitTrace",
    "FormatError",
    "HarpError",
    "HarpProcessor",
    "HarpRotation",
    "InvalidBlockError",
    "InvalidDimensionError",
    "InvalidInputError",
    "InvalidRadixError",
    "InvalidTapeError",
    "LayerProblem",
    "MultiplyCounter",
    "NoTableAvailableError",
    "NotFittedError",
    "PackedProcessor",
    "ProcessorPair",
    "QuantizerSpec",
    "Schedule",
    "SeededRng",
    "SingularSystemError",
    "SUPPORTED_TABLE_ORDERS",
    "SyntheticSpec",
    "TooLargeError",
    "UndefinedMetricError",
    "apply",
    "apply_transpose",
    "apply_with_tape",
    "block_kernel",
    "cayley",
    "evaluate_losses",
    "fallback_mixer",
    "finite_diff_check",
    "fit_layer",
    "gen_problem",
    "givens",
    "greedy_schedule",
    "hadamard_mixer",
    "identity_mixer",
    "init_zero",
    "invariance_check",
    "layer_grads",
    "load_processor",
    "make_codebook",
    "materialize",
    "mixer_for_radix",
    "mu_h",
    "mu_w",
    "multiply_count",
    "n_params",
    "offblock_fraction",
    "overhead_bpp",
    "pack_int8",
    "param_count",
    "proxy_loss",
    "qr_orthogonal",
    "quantize",
    "quantize_scalar",
    "quantize_vq",
    "rademacher",
    "read_tensor",
    "rht_equivalence_check",
    "rotate_layer",
    "rotate_with_tapes",
    "run_battery",
    "save_processor",
    "select_kron_factorization",
    "sign_table",
    "solve_linear",
    "spec_from_string",
    "storage_bits",
    "sylvester_hadamard",
    "sym_eig",
    "unpack",
    "unrotate_weight",
    "vjp",
    "write_tensor",
    "__version__",
]
