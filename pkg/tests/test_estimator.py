import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from harp.errors import InvalidInputError
from harp.estimator import HarpRotation
from harp.problems import SyntheticSpec, gen_problem

FAST = dict(steps=20, quantizer="scalar-rtn:bits=2,group=16")


@pytest.fixture(scope="module")
def fitted():
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=16, seed=0))
    est = HarpRotation(**FAST).fit(prob.w, prob.h)
    return prob, est


def test_get_params_round_trips_through_clone():
    est = HarpRotation(steps=7, lr=0.01, quantizer="scalar-rtn:bits=3,group=8")
    params = est.get_params()
    assert params["steps"] == 7
    assert params["quantizer"] == "scalar-rtn:bits=3,group=8"
    dup = clone(est)
    assert dup.get_params() == params


def test_unfitted_transform_raises():
    with pytest.raises(NotFittedError):
        HarpRotation().transform(np.ones((4, 4)))


def test_fit_sets_attributes(fitted):
    prob, est = fitted
    assert (est.d_out_, est.d_in_) == (16, 16)
    assert est.pair_.u.dim == 16 and est.pair_.v.dim == 16
    assert len(est.trace_.rows) == FAST["steps"]


def test_transform_inverse_round_trip(fitted):
    prob, est = fitted
    w_t = est.transform(prob.w)
    assert w_t.shape == prob.w.shape
    back = est.inverse_transform(w_t)
    assert np.max(np.abs(back - prob.w)) < 1e-12


def test_transform_is_orthogonal_conjugation(fitted):
    prob, est = fitted
    w_t = est.transform(prob.w)
    assert np.linalg.norm(w_t) == pytest.approx(np.linalg.norm(prob.w), rel=1e-12)


def test_transform_curvature_is_symmetric(fitted):
    prob, est = fitted
    h_t = est.transform_curvature(prob.h)
    assert h_t.shape == prob.h.shape
    assert np.max(np.abs(h_t - h_t.T)) == 0.0


def test_quantize_weight_reduces_against_identity_rotation(fitted):
    prob, est = fitted
    w_hat = est.quantize_weight(prob.w)
    assert w_hat.shape == prob.w.shape
    assert not np.array_equal(w_hat, prob.w)


def test_fit_without_curvature_uses_identity():
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=8, seed=1))
    est = HarpRotation(**FAST).fit(prob.w)
    assert est.d_in_ == 16
    w_t = est.transform(prob.w)
    assert w_t.shape == (8, 16)


def test_fit_rejects_bad_quantizer_string():
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=8, seed=2))
    with pytest.raises(InvalidInputError):
        HarpRotation(quantizer="nope:bits=1").fit(prob.w, prob.h)


def test_transform_rejects_wrong_width(fitted):
    prob, est = fitted
    # shape complaints follow the sklearn ValueError convention
    with pytest.raises(ValueError):
        est.transform(np.ones((4, 8)))


def test_seed_changes_signs_not_shape():
    prob = gen_problem(SyntheticSpec(d_in=16, d_out=16, seed=3))
    a = HarpRotation(**FAST, seed=0).fit(prob.w, prob.h)
    b = HarpRotation(**FAST, seed=1).fit(prob.w, prob.h)
    assert not np.array_equal(a.pair_.v.signs, b.pair_.v.signs)
    assert a.transform(prob.w).shape == b.transform(prob.w).shape
