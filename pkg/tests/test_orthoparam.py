import numpy as np
import pytest

from harp.errors import InvalidBlockError
from harp.mixers import hadamard_mixer, identity_mixer, mixer_for_radix
from harp.numerics import SeededRng
from harp.orthoparam import (
    BlockParams,
    block_kernel,
    block_kernel_adjoint,
    block_kernel_with_cache,
    cayley,
    givens,
    n_params,
)


@pytest.mark.parametrize("b,expected", [(2, 1), (3, 3), (4, 6), (8, 28)])
def test_n_params_is_strict_upper_triangle(b, expected):
    assert n_params(b) == expected


def test_givens_rotation():
    q = givens(np.pi / 2)
    assert np.allclose(q, [[0.0, -1.0], [1.0, 0.0]], atol=1e-12)
    assert np.allclose(givens(0.0), np.eye(2))


def test_cayley_frozen_example():
    """theta = (1, 0, 0) on b=3 maps the (0,1) plane to a quarter turn."""
    q = cayley(3, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(q, [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], atol=1e-15)


@pytest.mark.parametrize("b", [2, 3, 5, 8])
def test_cayley_orthogonal_det_plus_one(b):
    theta = SeededRng(4).derive(f"c{b}").gaussians(n_params(b)) * 0.7
    q = cayley(b, theta)
    assert np.max(np.abs(q @ q.T - np.eye(b))) < 1e-12
    assert abs(np.linalg.det(q) - 1.0) < 1e-10


def test_cayley_zero_is_exact_identity():
    assert np.array_equal(cayley(5, np.zeros(10)), np.eye(5))


def test_block_params_validation():
    with pytest.raises(InvalidBlockError):
        BlockParams(radix=3, theta=np.zeros(2))  # needs 3 angles
    with pytest.raises(InvalidBlockError):
        BlockParams(radix=2, theta=np.array([np.nan]))
    zp = BlockParams.zeros(4)
    assert zp.theta.shape == (6,)


def test_zero_kernel_is_mixer_copy():
    mixer = hadamard_mixer(4)
    k = block_kernel(BlockParams.zeros(4), mixer)
    assert np.array_equal(k, mixer.matrix)
    assert k is not mixer.matrix


@pytest.mark.parametrize("b", [2, 3, 4, 6, 8])
def test_kernel_is_rotation_times_mixer(b):
    mixer = mixer_for_radix(b)
    theta = SeededRng(9).derive(f"k{b}").gaussians(n_params(b)) * 0.5
    params = BlockParams(radix=b, theta=theta)
    k = block_kernel(params, mixer)
    q = givens(theta[0]) if b == 2 else cayley(b, theta)
    assert np.max(np.abs(k - q @ mixer.matrix)) < 1e-14
    assert np.max(np.abs(k @ k.T - np.eye(b))) < 1e-12


def test_kernel_mixer_size_mismatch():
    with pytest.raises(InvalidBlockError):
        block_kernel(BlockParams.zeros(4), hadamard_mixer(2))


@pytest.mark.parametrize("b", [2, 3, 4, 8])
@pytest.mark.parametrize("zero", [False, True])
def test_adjoint_matches_finite_differences(b, zero):
    mixer = mixer_for_radix(b)
    rng = SeededRng(33).derive(f"adj{b}{zero}")
    theta = np.zeros(n_params(b)) if zero else rng.gaussians(n_params(b)) * 0.4
    upstream = rng.gaussians(b * b, start=100).reshape(b, b)

    params = BlockParams(radix=b, theta=theta)
    _, cache = block_kernel_with_cache(params, mixer)
    grad = block_kernel_adjoint(params, mixer, upstream, cache)

    eps = 1e-6
    for i in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += eps
        tm[i] -= eps
        kp = block_kernel(BlockParams(radix=b, theta=tp), mixer)
        km = block_kernel(BlockParams(radix=b, theta=tm), mixer)
        fd = float(np.sum(upstream * (kp - km)) / (2 * eps))
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_adjoint_identity_mixer():
    # mixer = I isolates the rotation derivative itself
    mixer = identity_mixer(3)
    params = BlockParams(radix=3, theta=np.array([0.3, -0.2, 0.1]))
    _, cache = block_kernel_with_cache(params, mixer)
    upstream = np.eye(3)
    grad = block_kernel_adjoint(params, mixer, upstream, cache)
    assert grad.shape == (3,)
    assert np.all(np.isfinite(grad))
