"""Hand-written reverse mode through the staged transform.

The forward pass records, per (pass, stage), the activations entering the
stage together with the built kernels and their factorization caches; the
backward sweep replays the stages in reverse, contracting the upstream
gradient against the cached activations to get per-block kernel gradients
and against the kernels to propagate into the activations. Nothing here
differentiates through the quantizer or the diagonal weights: callers pass
those in as fixed adjoints, which is what makes the stop-gradient contract
hold by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import InvalidInputError, InvalidTapeError
from .orthoparam import KernelCache, block_kernel_adjoint
from .transform import HarpProcessor, ProcessorPair, _check_input, _kron_mix, stage_kernels


@dataclass
class StageRecord:
    pass_idx: int
    stage: int
    x_in: npt.NDArray[np.float64]
    kernels: npt.NDArray[np.float64]
    caches: list[KernelCache]


@dataclass
class GradTape:
    """Forward activations and kernel caches for one apply call."""

    processor: HarpProcessor
    n_rows: int
    records: list[StageRecord]


def apply_with_tape(
    p: HarpProcessor, x: npt.ArrayLike
) -> tuple[npt.NDArray[np.float64], GradTape]:
    """Like transform.apply but records what the backward sweep needs.

    Args:
        p: processor.
        x: (n, dim) rows.

    Returns:
        (y, tape) with y identical to transform.apply(p, x).
    """
    arr = _check_input(p, x)
    n = arr.shape[0]
    y = arr * p.signs[np.newaxis, :]
    records: list[StageRecord] = []
    if p.mode == "kronecker":
        cur = y.reshape(n * p.kron_k, p.schedule.dim)
    else:
        cur = y
    for q in range(p.passes):
        for t, b in enumerate(p.schedule.radices):
            kernels, caches = stage_kernels(p, q, t)
            records.append(StageRecord(q, t, cur, kernels, caches))
            cur = _stage_matmul(cur, kernels, b, p.schedule.strides[t])
    if p.mode == "kronecker":
        out = _kron_mix(cur.reshape(n, p.dim), p.kron_k, p.schedule.dim)
    else:
        out = cur
    return out, GradTape(processor=p, n_rows=n, records=records)


def _stage_matmul(
    x: npt.NDArray[np.float64],
    kernels: npt.NDArray[np.float64],
    b: int,
    s: int,
) -> npt.NDArray[np.float64]:
    n, d = x.shape
    g = d // (b * s)
    xh = x.reshape(n, g, b, s).transpose(0, 1, 3, 2)
    yh = np.einsum("ngsb,gsbc->ngsc", xh, kernels.reshape(g, s, b, b))
    return yh.transpose(0, 1, 3, 2).reshape(n, d)


def vjp(
    p: HarpProcessor,
    tape: GradTape,
    upstream: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Pull an output gradient back through a taped apply.

    Args:
        p: the processor the tape was recorded against.
        tape: record from apply_with_tape.
        upstream: dL/dy, shape (n, dim).

    Returns:
        (grad_x, grad_theta) where grad_x is dL/dx with the input's shape and
        grad_theta is flat in the processor's (pass, stage, block, angle)
        order, matching HarpProcessor.flat_thetas().

    Raises:
        InvalidTapeError: if the tape belongs to a different processor.
        InvalidInputError: on upstream shape mismatch.
    """
    if tape.processor is not p:
        raise InvalidTapeError("tape was recorded against a different processor")
    up = np.ascontiguousarray(upstream, dtype=np.float64)
    if up.shape != (tape.n_rows, p.dim):
        raise InvalidInputError(f"upstream shape {up.shape} != ({tape.n_rows}, {p.dim})")
    if p.mode == "kronecker":
        dy = _kron_mix(up, p.kron_k, p.schedule.dim, transpose=True)
        dy = dy.reshape(tape.n_rows * p.kron_k, p.schedule.dim)
    else:
        dy = up
    grads_per_record: list[npt.NDArray[np.float64]] = [None] * len(tape.records)  # type: ignore[list-item]
    for idx in range(len(tape.records) - 1, -1, -1):
        rec = tape.records[idx]
        b = p.schedule.radices[rec.stage]
        s = p.schedule.strides[rec.stage]
        n, d = rec.x_in.shape
        g = d // (b * s)
        k4 = rec.kernels.reshape(g, s, b, b)
        xh = rec.x_in.reshape(n, g, b, s).transpose(0, 1, 3, 2)
        dyh = dy.reshape(n, g, b, s).transpose(0, 1, 3, 2)
        dk = np.einsum("ngsb,ngsc->gsbc", xh, dyh).reshape(g * s, b, b)
        blocks = p.params[rec.pass_idx][rec.stage]
        mixer = p.mixers[rec.stage]
        block_grads = np.empty((len(blocks), blocks[0].theta.shape[0]))
        for c, bp in enumerate(blocks):
            block_grads[c] = block_kernel_adjoint(bp, mixer, dk[c], rec.caches[c])
        grads_per_record[idx] = block_grads.ravel()
        dxh = np.einsum("ngsc,gsbc->ngsb", dyh, k4)
        dy = dxh.transpose(0, 1, 3, 2).reshape(n, d)
    if p.mode == "kronecker":
        dy = dy.reshape(tape.n_rows, p.dim)
    grad_x = dy * p.signs[np.newaxis, :]
    grad_theta = np.concatenate(grads_per_record) if grads_per_record else np.zeros(0)
    return grad_x, grad_theta


def rotate_with_tapes(
    pair: ProcessorPair,
    w: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64], dict]:
    """Rotate a layer, keeping the tapes of all four transform calls.

    Computes w_t = U^T W V and h_t = sym(V^T H V) entirely through staged
    applies (no dense processor matrices):

        a   = apply_v(W)        rows of W hit by V on the right
        w_t = apply_u(a^T)^T    columns hit by U^T on the left
        c   = apply_v(H)
        h_t = sym(apply_v(c^T)^T)

    Returns:
        (w_t, h_t, tapes) where tapes holds the four GradTape records under
        keys "a", "wt", "c", "ht".
    """
    a, tape_a = apply_with_tape(pair.v, w)
    wt_t, tape_wt = apply_with_tape(pair.u, a.T)
    c, tape_c = apply_with_tape(pair.v, h)
    ht_t, tape_ht = apply_with_tape(pair.v, c.T)
    w_t = wt_t.T
    h_raw = ht_t.T
    h_t = 0.5 * (h_raw + h_raw.T)
    return w_t, h_t, {"a": tape_a, "wt": tape_wt, "c": tape_c, "ht": tape_ht}


def layer_grads(
    pair: ProcessorPair,
    w: npt.NDArray[np.float64],
    h: npt.NDArray[np.float64],
    grad_w_tilde: npt.NDArray[np.float64],
    grad_h_tilde: npt.NDArray[np.float64],
    tapes: dict | None = None,
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Angle gradients of a loss given its adjoints at the rotated layer.

    Args:
        pair: processors (u over rows of W, v over columns).
        w: d_out x d_in weight matrix.
        h: d_in x d_in symmetric curvature.
        grad_w_tilde: dL/d(U^T W V).
        grad_h_tilde: dL/d(sym(V^T H V)).
        tapes: records from rotate_with_tapes; recomputed when omitted.

    Returns:
        (grad_theta_u, grad_theta_v), flat in each processor's angle order.
    """
    if tapes is None:
        _, _, tapes = rotate_with_tapes(pair, w, h)
    gw = np.ascontiguousarray(grad_w_tilde, dtype=np.float64)
    gh = np.ascontiguousarray(grad_h_tilde, dtype=np.float64)
    # w_t = apply_u(a^T)^T: adjoint enters transposed
    d_a_t, grad_u = vjp(pair.u, tapes["wt"], gw.T)
    _, grad_v_w = vjp(pair.v, tapes["a"], d_a_t.T)
    # h_t = sym(h_raw) where h_raw = apply_v(c^T)^T
    gh_sym = 0.5 * (gh + gh.T)
    d_c_t, grad_v_h2 = vjp(pair.v, tapes["ht"], gh_sym.T)
    _, grad_v_h1 = vjp(pair.v, tapes["c"], d_c_t.T)
    grad_v = grad_v_w + grad_v_h1 + grad_v_h2
    return grad_u, grad_v


def finite_diff_check(
    f,
    x0: npt.NDArray[np.float64],
    step: float = 1e-5,
) -> float:
    """Max relative disagreement between analytic and central-difference grad.

    Args:
        f: callable x -> (value, grad) with grad the analytic gradient at x.
        x0: point to check at.
        step: central-difference step.

    Returns:
        max over coordinates of |analytic - numeric| / max(1e-8, |numeric|).
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    _, analytic = f(x0)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x0.shape:
        raise InvalidInputError(f"gradient shape {analytic.shape} != point shape {x0.shape}")
    numeric = np.zeros_like(x0)
    for k in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[k] += step
        xm[k] -= step
        numeric[k] = (f(xp)[0] - f(xm)[0]) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(numeric))))
