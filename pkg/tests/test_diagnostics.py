import csv
import math

import numpy as np
import pytest

from harp.diagnostics import (
    EIGENGAP_RTOL,
    DiagnosticsReport,
    describe_processor,
    invariance_check,
    mu_h,
    mu_w,
    offblock_fraction,
    proxy_loss,
    run_battery,
    spectrum_degenerate,
    unrotate_weight,
)
from harp.errors import UndefinedMetricError
from harp.numerics import SeededRng
from harp.problems import SyntheticSpec, gen_problem
from harp.quantizers import QuantizerSpec, quantize
from harp.schedule import Schedule, greedy_schedule
from harp.transform import ProcessorPair, apply, init_zero


def seeded_pair(d_out, d_in, seed=0, scale=0.3):
    rng = SeededRng(seed)
    u = init_zero(greedy_schedule(d_out), sign_rng=rng.derive("u"))
    v = init_zero(greedy_schedule(d_in), sign_rng=rng.derive("v"))
    u = u.with_thetas(rng.derive("ut").gaussians(len(u.flat_thetas())) * scale)
    v = v.with_thetas(rng.derive("vt").gaussians(len(v.flat_thetas())) * scale)
    return ProcessorPair(u=u, v=v)


def test_mu_w_frozen_values():
    # single nonzero entry in a 2x2: sqrt(4) * 1 / 1 = 2
    a = np.zeros((2, 2))
    a[0, 1] = 3.0
    assert mu_w(a) == 2.0
    # constant matrix is maximally spread: mu = 1
    assert mu_w(np.ones((4, 8))) == pytest.approx(1.0)
    with pytest.raises(UndefinedMetricError):
        mu_w(np.zeros((3, 3)))


def test_spectrum_degenerate():
    assert not spectrum_degenerate(np.array([3.0, 2.0, 1.0]))
    assert spectrum_degenerate(np.array([3.0, 2.0, 2.0]))
    assert spectrum_degenerate(np.array([2.0, 2.0 * (1.0 - 1e-12), 1.0]))
    assert not spectrum_degenerate(np.array([2.0, 2.0 * (1.0 - 1e-6), 1.0]))
    assert not spectrum_degenerate(np.array([5.0]))
    assert EIGENGAP_RTOL == 1e-9


def test_mu_h_frozen_values():
    value, degenerate = mu_h(np.diag([1.0, 2.0, 3.0]))
    assert value == pytest.approx(math.sqrt(3.0))
    assert not degenerate
    _, degenerate = mu_h(np.eye(3))
    assert degenerate


def test_offblock_fraction():
    h = np.array([[1.0, 2.0], [2.0, 1.0]])
    # off energy 8 over total 10
    assert offblock_fraction(h, 1) == pytest.approx(0.8)
    assert offblock_fraction(h, 2) == 0.0
    with pytest.raises(UndefinedMetricError):
        offblock_fraction(np.zeros((4, 4)), 2)


def test_proxy_loss_frozen():
    w = np.array([[1.0, 0.0]])
    w_hat = np.zeros((1, 2))
    h = np.diag([2.0, 6.0])
    assert proxy_loss(w, w_hat, h) == 2.0
    with pytest.raises(UndefinedMetricError):
        proxy_loss(w, np.zeros((2, 2)), h)


def test_unrotate_inverts_rotation():
    pair = seeded_pair(8, 16, seed=3)
    w = SeededRng(4).gaussians(8 * 16).reshape(8, 16)
    w_t = apply(pair.u, apply(pair.v, w).T).T
    back = unrotate_weight(pair, w_t)
    assert np.max(np.abs(back - w)) < 1e-12


def test_invariance_check_roundoff_level():
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=16, seed=5))
    pair = seeded_pair(16, 16, seed=6)
    w_t = apply(pair.u, apply(pair.v, prob.w).T).T
    w_hat_t = quantize(QuantizerSpec("scalar-rtn", bits=3, group=16), w_t)
    report = invariance_check(pair, prob.w, prob.h, w_hat_t)
    assert report["rel_gap"] < 1e-10
    assert report["rotated"] == pytest.approx(report["original"], rel=1e-10)


def test_describe_processor():
    p = init_zero(Schedule(32, (8, 4)))
    assert describe_processor(p) == "mixed-radix[8x4] zero"
    q = p.with_thetas(np.full(len(p.flat_thetas()), 0.1))
    assert describe_processor(q) == "mixed-radix[8x4] fitted"
    k = init_zero(Schedule(4, (2, 2)), mode="kronecker", kron_k=12, passes=2)
    assert describe_processor(k) == "kronecker[2x2] K=12 passes=2 zero"


def test_run_battery_report_shape_and_csv():
    prob = gen_problem(SyntheticSpec(d_in=32, d_out=32, seed=0))
    pair = seeded_pair(32, 32, seed=1)
    spec = QuantizerSpec("scalar-rtn", bits=2, group=32)
    report = run_battery(prob, pair, spec)
    assert report.mu_w_pre > report.mu_w_post  # rotation spreads the outliers
    assert 0.0 <= report.offblock_fraction <= 1.0
    assert report.l_diag > 0.0 and report.proxy_loss > 0.0
    row = report.csv_row()
    fields = next(csv.reader([row]))
    assert len(fields) == DiagnosticsReport.CSV_HEADER.count(",") + 1
    assert fields[-1] == "scalar-rtn(bits=2, group=32)"
    assert "mu_w pre -> post" in report.pretty()


def test_run_battery_zero_pair_keeps_proxy_of_plain_quantization():
    """At theta = 0 with all-plus signs the rotated-basis proxy equals the
    plain Hadamard-rotated quantization loss measured in the original basis."""
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=16, seed=7))
    u = init_zero(greedy_schedule(16))
    v = init_zero(greedy_schedule(16))
    pair = ProcessorPair(u=u, v=v)
    spec = QuantizerSpec("scalar-rtn", bits=2, group=16)
    report = run_battery(prob, pair, spec)
    w_t = apply(u, apply(v, prob.w).T).T
    w_hat = unrotate_weight(pair, quantize(spec, w_t))
    assert report.proxy_loss == pytest.approx(proxy_loss(prob.w, w_hat, prob.h), rel=1e-12)
