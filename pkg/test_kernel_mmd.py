"""Tests for the Gaussian kernel, the biased MMD^2 estimator and its gradient."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from errors import DimensionMismatchError, InvalidDataError
from kernel_mmd import gaussian_kernel, kernel_matrix, mmd2_biased, mmd2_naive, mmd_gradient_wrt_q
from linalg_core import random_orthogonal
from models import KernelConfig, OrthogonalMatrix
from stiefel_opt import cayley_step

finite = st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False)


def samples(max_rows=8, dim=2):
    return st.integers(1, max_rows).flatmap(lambda rows: arrays(np.float64, (rows, dim), elements=finite))


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

def test_kernel_at_zero_distance():
    assert gaussian_kernel([0.3, -1.2, 4.0], [0.3, -1.2, 4.0]) == 1.0


def test_kernel_at_two_sigma_sq():
    assert_allclose(gaussian_kernel([0, 0], [2, 0], KernelConfig(sigma_sq=2.0)), np.exp(-1))


def test_kernel_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        gaussian_kernel([0, 0], [0, 0, 0])


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
def test_kernel_is_symmetric_and_bounded(x, y):
    value = gaussian_kernel(x, y)
    assert 0 <= value <= 1
    assert value == gaussian_kernel(y, x)


def test_kernel_matrix_matches_pointwise(rng):
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    k = kernel_matrix(a, b)
    for i in range(4):
        for j in range(5):
            assert_allclose(k[i, j], gaussian_kernel(a[i], b[j]), rtol=1e-14)


# ---------------------------------------------------------------------------
# MMD^2
# ---------------------------------------------------------------------------

def test_mmd_of_single_points():
    value = mmd2_biased(np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]]), KernelConfig(sigma_sq=2.0))
    assert_allclose(value, 2 * (1 - np.exp(-1)), rtol=1e-14)


def test_mmd_matches_naive_oracle(rng):
    for _ in range(20):
        X = rng.standard_normal((rng.integers(5, 21), 3))
        Y = rng.standard_normal((rng.integers(5, 16), 3)) + rng.uniform(-1, 1)
        assert abs(mmd2_biased(X, Y) - mmd2_naive(X, Y)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(samples(), samples())
def test_mmd_is_symmetric_and_nonnegative(X, Y):
    value = mmd2_biased(X, Y)
    assert value >= -1e-12
    assert abs(value - mmd2_biased(Y, X)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(samples(max_rows=12))
def test_mmd_of_sample_with_itself_is_zero(X):
    assert abs(mmd2_biased(X, X)) < 1e-12


def test_within_sample_terms_are_rotation_invariant(rng):
    Z = rng.standard_normal((30, 4))
    q = random_orthogonal(4, seed=1).Q
    before = kernel_matrix(Z, Z).sum()
    after = kernel_matrix(Z @ q, Z @ q).sum()
    assert abs(before - after) / Z.shape[0] ** 2 < 1e-10


def test_mmd_rejects_empty_and_mismatched():
    with pytest.raises(InvalidDataError):
        mmd2_biased(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionMismatchError):
        mmd2_biased(np.zeros((2, 2)), np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# Gradient with respect to Q^T
# ---------------------------------------------------------------------------

def test_gradient_single_pair():
    g = mmd_gradient_wrt_q(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), OrthogonalMatrix.identity(2), KernelConfig(sigma_sq=2.0))
    assert_allclose(g, [[-1.0, 0.0], [0.0, 0.0]], atol=1e-15)


def test_gradient_vanishes_for_far_apart_samples(rng):
    z_a = rng.standard_normal((6, 2)) * 0.1
    z_b = rng.standard_normal((5, 2)) * 0.1 + [40.0, 0.0]
    dist_sq = ((z_a[:, None, :] - z_b[None, :, :]) ** 2).sum(-1)
    assert np.all(-dist_sq / 4.0 <= -60)
    g = mmd_gradient_wrt_q(z_a, z_b, OrthogonalMatrix.identity(2))
    assert np.all(np.abs(g) < 1e-20)


def test_gradient_shape_check(rng):
    with pytest.raises(DimensionMismatchError):
        mmd_gradient_wrt_q(rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), OrthogonalMatrix.identity(2))


def test_directional_derivative_along_cayley_curves(rng):
    """The gradient predicts the slope of the full MMD^2 along Cayley curves."""
    cfg = KernelConfig(sigma_sq=2.0)
    eps = 1e-6
    for trial in range(25):
        p = int(rng.integers(2, 5))
        z_a = rng.standard_normal((15, p))
        z_b = rng.standard_normal((12, p)) + 0.5
        q0 = random_orthogonal(p, seed=trial).Q
        w = rng.standard_normal((p, p))

        a = w @ q0.T - q0 @ w.T
        velocity = -a @ q0
        g = mmd_gradient_wrt_q(z_a, z_b, q0, cfg)
        analytic = float(np.sum(g * velocity.T))

        plus = cayley_step(q0, w, eps).Q
        minus = cayley_step(q0, -w, eps).Q
        numeric = (mmd2_biased(z_a, z_b @ plus, cfg) - mmd2_biased(z_a, z_b @ minus, cfg)) / (2 * eps)

        assert abs(numeric - analytic) / max(abs(analytic), 1e-3) < 1e-4
