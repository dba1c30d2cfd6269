"""Incoherence and loss diagnostics for layers and fitted processors.

The two coherence measures scale the matrices so a perfectly spread matrix
scores O(1):

  * mu_w(A) = sqrt(m n) ||A||_max / ||A||_F    (entrywise peak vs energy)
  * mu_h(H) = sqrt(n) max |Q_ij| over the eigenvector matrix Q of H

mu_h is only meaningful when the spectrum separates its eigenvectors; reports
carry a degeneracy flag raised when adjacent eigenvalues differ by less than
1e-9 relatively, and readers should ignore mu_h on flagged reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import UndefinedMetricError
from .fitting import (
    FitConfig,
    LayerProblem,
    clip_reg_block,
    diag_weights,
    loss_diag,
    loss_offblock,
    rotate_layer,
)
from .gradcore import rotate_with_tapes
from .numerics import sym_eig
from .quantizers import QuantizerSpec, quantize
from .transform import HarpProcessor, ProcessorPair, apply_transpose
from .validation import check_matrix, check_symmetric

EIGENGAP_RTOL = 1e-9


def mu_w(a: npt.NDArray[np.float64]) -> float:
    """Weight coherence sqrt(mn) ||A||_max / ||A||_F.

    Raises:
        UndefinedMetricError: for an all-zero matrix.
    """
    a = check_matrix(a, "a")
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        raise UndefinedMetricError("mu_w is undefined for a zero matrix")
    peak = float(np.max(np.abs(a)))
    m, n = a.shape
    return math.sqrt(m * n) * peak / fro


def spectrum_degenerate(lam: npt.NDArray[np.float64], rtol: float = EIGENGAP_RTOL) -> bool:
    """True when two adjacent eigenvalues agree within rtol (relative)."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size < 2:
        return False
    scale = np.maximum(np.abs(lam[:-1]), np.abs(lam[1:]))
    gaps = np.abs(np.diff(lam))
    return bool(np.any(gaps <= rtol * np.maximum(scale, 1e-300)))


def mu_h(h: npt.NDArray[np.float64]) -> tuple[float, bool]:
    """Curvature coherence sqrt(n) max |Q_ij| plus a degeneracy flag.

    Args:
        h: symmetric matrix.

    Returns:
        (value, degenerate); the value is unreliable when degenerate is True
        because the eigenbasis is not unique.
    """
    h = check_symmetric(h, "h")
    q, lam = sym_eig(h)
    value = math.sqrt(h.shape[0]) * float(np.max(np.abs(q)))
    return value, spectrum_degenerate(lam)


def offblock_fraction(h_tilde: npt.NDArray[np.float64], g: int) -> float:
    """Share of squared energy outside the g x g diagonal blocks.

    Raises:
        UndefinedMetricError: for an all-zero matrix.
    """
    h_tilde = check_matrix(h_tilde, "h_tilde", square=True)
    total = float(np.sum(h_tilde * h_tilde))
    if total == 0.0:
        raise UndefinedMetricError("offblock_fraction is undefined for a zero matrix")
    d = h_tilde.shape[0]
    off = loss_offblock(h_tilde, g) * d * d
    return off / total


def proxy_loss(
    w: npt.NDArray[np.float64],
    w_hat: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
) -> float:
    """Curvature-weighted squared error Tr((W - What) H (W - What)^T)."""
    w = check_matrix(w, "w")
    if w_hat.shape != w.shape:
        raise UndefinedMetricError(f"w_hat shape {w_hat.shape} != {w.shape}")
    h = check_symmetric(h, "h")
    delta = w - w_hat
    return float(np.einsum("ij,jk,ik->", delta, h, delta))


def unrotate_weight(
    pair: ProcessorPair, w_hat_tilde: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """Map a rotated-basis weight back: W = U what V^T, via staged applies."""
    b = apply_transpose(pair.v, w_hat_tilde)
    return apply_transpose(pair.u, b.T).T


def invariance_check(
    pair: ProcessorPair,
    w: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
    w_hat_tilde: npt.NDArray[np.float64],
) -> dict:
    """Proxy loss measured in rotated and original coordinates.

    Orthogonality of both sides makes the two numbers equal in exact
    arithmetic; the report carries the relative gap so callers can assert
    a roundoff-level bound.

    Returns:
        dict with rotated, original, and rel_gap.
    """
    w_t, h_t, _ = rotate_with_tapes(pair, w, h)
    rotated = proxy_loss(w_t, w_hat_tilde, h_t)
    original = proxy_loss(w, unrotate_weight(pair, w_hat_tilde), h)
    denom = max(abs(original), 1e-300)
    return {
        "rotated": rotated,
        "original": original,
        "rel_gap": abs(rotated - original) / denom,
    }


@dataclass
class DiagnosticsReport:
    """One battery run over a layer and a processor pair."""

    mu_w_pre: float
    mu_w_post: float
    mu_h_pre: float
    mu_h_post: float
    mu_h_degenerate: bool
    offblock_fraction: float
    l_diag: float
    proxy_loss: float
    labels: dict[str, str]

    CSV_HEADER = (
        "mu_w_pre,mu_w_post,mu_h_pre,mu_h_post,mu_h_degenerate,"
        "offblock_fraction,l_diag,proxy_loss,processor,quantizer"
    )

    def csv_row(self) -> str:
        # label fields may contain commas, so they get RFC 4180 quoting
        def quoted(text: str) -> str:
            return '"' + text.replace('"', '""') + '"' if "," in text or '"' in text else text

        return (
            f"{self.mu_w_pre:.17g},{self.mu_w_post:.17g},{self.mu_h_pre:.17g},"
            f"{self.mu_h_post:.17g},{int(self.mu_h_degenerate)},"
            f"{self.offblock_fraction:.17g},{self.l_diag:.17g},{self.proxy_loss:.17g},"
            f"{quoted(self.labels.get('processor', ''))},"
            f"{quoted(self.labels.get('quantizer', ''))}"
        )

    def pretty(self) -> str:
        flag = " (degenerate spectrum; unreliable)" if self.mu_h_degenerate else ""
        return "\n".join(
            [
                f"processor          {self.labels.get('processor', '')}",
                f"quantizer          {self.labels.get('quantizer', '')}",
                f"mu_w pre -> post   {self.mu_w_pre:.4f} -> {self.mu_w_post:.4f}",
                f"mu_h pre -> post   {self.mu_h_pre:.4f} -> {self.mu_h_post:.4f}{flag}",
                f"offblock fraction  {self.offblock_fraction:.6f}",
                f"l_diag             {self.l_diag:.6e}",
                f"proxy loss         {self.proxy_loss:.6e}",
            ]
        )


def describe_processor(p: HarpProcessor) -> str:
    radices = "x".join(str(b) for b in p.schedule.radices)
    tag = f"{p.mode}[{radices}]"
    if p.mode == "kronecker":
        tag += f" K={p.kron_k}"
    if p.passes != 1:
        tag += f" passes={p.passes}"
    tag += " zero" if p.is_zero() else " fitted"
    return tag


def run_battery(
    prob: LayerProblem,
    pair: ProcessorPair,
    quantizer: QuantizerSpec,
    reg_block: int = 8,
) -> DiagnosticsReport:
    """Rotate, quantize, and measure one layer with one processor pair.

    Args:
        prob: layer problem.
        pair: processors to evaluate.
        quantizer: backend quantizing the rotated weight.
        reg_block: block size for the off-block share (clipped to a divisor).

    Returns:
        DiagnosticsReport; proxy_loss is measured in the original basis on
        the unrotated quantized weight.
    """
    g = clip_reg_block(prob.d_in, reg_block)
    w_t, h_t = rotate_layer(pair, prob)
    w_hat_t = quantize(quantizer, w_t)
    wbar = diag_weights(h_t)
    mu_h_pre, deg_pre = mu_h(prob.h)
    mu_h_post, deg_post = mu_h(h_t)
    w_hat = unrotate_weight(pair, w_hat_t)
    return DiagnosticsReport(
        mu_w_pre=mu_w(prob.w),
        mu_w_post=mu_w(w_t),
        mu_h_pre=mu_h_pre,
        mu_h_post=mu_h_post,
        mu_h_degenerate=deg_pre or deg_post,
        offblock_fraction=offblock_fraction(h_t, g),
        l_diag=loss_diag(w_t, w_hat_t, wbar),
        proxy_loss=proxy_loss(prob.w, w_hat, prob.h),
        labels={
            "processor": f"U {describe_processor(pair.u)} | V {describe_processor(pair.v)}",
            "quantizer": quantizer.describe(),
        },
    )


def evaluate_pair(prob: LayerProblem, pair: ProcessorPair, cfg: FitConfig) -> dict:
    """Convenience: the fit losses of a pair under a config's quantizer."""
    from .fitting import evaluate_losses

    return evaluate_losses(pair, prob, cfg)
