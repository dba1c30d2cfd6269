"""Scikit-learn style front end over the fitting pipeline.

HarpRotation treats a weight matrix as X and the layer's second-moment
matrix as y: fit() learns the processor pair, transform() maps weights
into the rotated coordinates where quantization happens, and
inverse_transform() maps them back.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .diagnostics import unrotate_weight
from .fitting import FitConfig, LayerProblem, fit_layer
from .numerics import SeededRng
from .quantizers import quantize, spec_from_string
from .schedule import greedy_schedule
from .transform import HarpProcessor, ProcessorPair, apply, init_zero, select_kron_factorization


class HarpRotation(BaseEstimator, TransformerMixin):
    """Learn an orthogonal processor pair for one linear layer.

    Parameters mirror FitConfig plus the schedule knobs; the quantizer is
    given as a spec string (e.g. "scalar-rtn:bits=2,group=32") so estimator
    params stay clonable scalars.

    Attributes:
        pair_: fitted ProcessorPair.
        trace_: FitTrace of the optimization.
        d_out_, d_in_: layer shape seen at fit time.
    """

    def __init__(
        self,
        steps: int = 1200,
        lr: float = 3e-2,
        lambda_bd: float = 0.1,
        reg_block: int = 8,
        refresh_period: int = 1,
        quantizer: str = "scalar-rtn:bits=4,group=128",
        b_base: int = 8,
        b_max: int = 8,
        passes: int = 1,
        mode: str = "mixed-radix",
        seed: int = 0,
    ) -> None:
        self.steps = steps
        self.lr = lr
        self.lambda_bd = lambda_bd
        self.reg_block = reg_block
        self.refresh_period = refresh_period
        self.quantizer = quantizer
        self.b_base = b_base
        self.b_max = b_max
        self.passes = passes
        self.mode = mode
        self.seed = seed

    def _zero_side(self, d: int, label: str) -> HarpProcessor:
        rng = SeededRng(self.seed).derive(f"signs-{label}")
        if self.mode == "kronecker":
            k, log2n = select_kron_factorization(d)
            sched = greedy_schedule(2**log2n, self.b_base, self.b_max)
            return init_zero(sched, passes=self.passes, mode="kronecker", kron_k=k, sign_rng=rng)
        sched = greedy_schedule(d, self.b_base, self.b_max)
        return init_zero(sched, passes=self.passes, sign_rng=rng)

    def fit(self, X, y=None) -> "HarpRotation":
        """Fit processors to weight X (d_out, d_in) and curvature y (d_in, d_in).

        y=None uses the identity curvature, reducing the data term to a
        plain mean-squared quantization error.
        """
        w = check_array(X, dtype=np.float64)
        if y is None:
            h = np.eye(w.shape[1])
        else:
            h = check_array(y, dtype=np.float64)
        prob = LayerProblem(w=w, h=h)
        cfg = FitConfig(
            steps=self.steps,
            lr=self.lr,
            lambda_bd=self.lambda_bd,
            reg_block=self.reg_block,
            refresh_period=self.refresh_period,
            quantizer=spec_from_string(self.quantizer),
        )
        pair0 = ProcessorPair(
            u=self._zero_side(prob.d_out, "u"), v=self._zero_side(prob.d_in, "v")
        )
        self.pair_, self.trace_ = fit_layer(prob, pair0, cfg)
        self.d_out_, self.d_in_ = prob.d_out, prob.d_in
        return self

    def _check_shape(self, w: np.ndarray) -> None:
        if w.shape != (self.d_out_, self.d_in_):
            raise ValueError(f"expected shape ({self.d_out_}, {self.d_in_}), got {w.shape}")

    def transform(self, X) -> np.ndarray:
        """Rotate a weight matrix into the learned coordinates: U^T X V."""
        check_is_fitted(self, "pair_")
        w = check_array(X, dtype=np.float64)
        self._check_shape(w)
        return apply(self.pair_.u, apply(self.pair_.v, w).T).T

    def inverse_transform(self, X) -> np.ndarray:
        """Undo transform(): U X V^T."""
        check_is_fitted(self, "pair_")
        w_t = check_array(X, dtype=np.float64)
        self._check_shape(w_t)
        return unrotate_weight(self.pair_, w_t)

    def transform_curvature(self, H) -> np.ndarray:
        """Rotate a curvature matrix: symmetrized V^T H V."""
        check_is_fitted(self, "pair_")
        h = check_array(H, dtype=np.float64)
        raw = apply(self.pair_.v, apply(self.pair_.v, h).T).T
        return 0.5 * (raw + raw.T)

    def quantize_weight(self, X) -> np.ndarray:
        """Convenience: quantize in the rotated basis, return in the original."""
        check_is_fitted(self, "pair_")
        w_t = self.transform(X)
        w_hat_t = quantize(spec_from_string(self.quantizer), w_t)
        return self.inverse_transform(w_hat_t)
