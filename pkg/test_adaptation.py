"""Tests for whitening, reconstruction and the two adaptation modes."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from adaptation import (
    adapt_semisupervised,
    adapt_unsupervised,
    affine_map_from_whitening,
    fit_shared_whitening,
    fit_whitening,
    pseudoinverse_project,
    reconstruct,
    restart_seed_points,
    whiten,
)
from errors import (
    DegenerateCovarianceError,
    DegenerateLabelsError,
    DimensionMismatchError,
    InvalidDataError,
    RankDeficientError,
)
from linalg_core import random_orthogonal
from models import Dataset, OptimizerConfig, OrthogonalMatrix
from simulation import anti_alignment_domains, labeled_subset, make_affine_domain


def low_rank_dataset(rng, rows=200, latent=2, obs=5):
    Z = Dataset(values=rng.standard_normal((rows, latent)))
    X, amap = make_affine_domain(Z, obs, seed=int(rng.integers(1000)))
    return Z, X, amap


# ---------------------------------------------------------------------------
# Whitening
# ---------------------------------------------------------------------------

def test_white_input_has_unit_scales(rng):
    X = Dataset(values=rng.standard_normal((4000, 3)))
    model = fit_whitening(X, p=3)
    assert_allclose(model.s_sqrt, np.ones(3), atol=0.1)


def test_rank_is_detected(rng):
    _, X, _ = low_rank_dataset(rng)
    assert fit_whitening(X).p == 2


def test_constant_dataset_is_degenerate():
    with pytest.raises(DegenerateCovarianceError):
        fit_whitening(Dataset(values=np.ones((10, 3))))


def test_requesting_more_than_rank_fails(rng):
    _, X, _ = low_rank_dataset(rng)
    with pytest.raises(RankDeficientError, match="rank deficient for requested p"):
        fit_whitening(X, p=3)


def test_whitened_fitting_set_is_white(rng):
    for _ in range(50):
        dim = int(rng.integers(3, 21))
        rows = int(rng.integers(50, 501))
        mixing = rng.standard_normal((dim, dim))
        X = Dataset(values=rng.standard_normal((rows, dim)) @ mixing + rng.uniform(-5, 5, dim))
        model = fit_whitening(X)
        Z = whiten(model, X).values
        assert np.max(np.abs(Z.mean(axis=0))) < 1e-8
        assert np.max(np.abs(Z.T @ Z / rows - np.eye(model.p))) < 1e-6


def test_whitening_recovers_latent_up_to_orthogonal(rng):
    latent = rng.standard_normal((300, 2))
    latent = (latent - latent.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(latent.T, bias=True))).T
    X, _ = make_affine_domain(Dataset(values=latent), 5, seed=8)
    Z_hat = whiten(fit_whitening(X), X).values

    # Orthogonal Procrustes fit of the latent onto the whitened output.
    u, _, vt = np.linalg.svd(latent.T @ Z_hat)
    w = u @ vt
    assert np.max(np.abs(w.T @ w - np.eye(2))) < 1e-6
    assert np.max(np.abs(Z_hat - latent @ w)) < 1e-6


def test_whitening_equals_pseudoinverse(rng):
    X = Dataset(values=rng.standard_normal((100, 4)) @ rng.standard_normal((4, 4)))
    model = fit_whitening(X)
    for seed in range(20):
        q = random_orthogonal(model.p, seed=seed)
        x = Dataset(values=rng.standard_normal((5, 4)) * 3)
        direct = whiten(model, x, q).values
        via_map = pseudoinverse_project(affine_map_from_whitening(model, q), x).values
        assert np.max(np.abs(direct - via_map)) < 1e-10


def test_whiten_dimension_mismatch(rng):
    model = fit_whitening(Dataset(values=rng.standard_normal((20, 3))))
    with pytest.raises(DimensionMismatchError):
        whiten(model, Dataset(values=np.zeros((2, 4))))


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

def test_round_trip_on_low_rank_data(rng):
    _, X, _ = low_rank_dataset(rng)
    model = fit_whitening(X)
    assert np.max(np.abs(reconstruct(model, whiten(model, X)).values - X.values)) < 1e-8


def test_round_trip_with_rotation(rng):
    _, X, _ = low_rank_dataset(rng)
    model = fit_whitening(X)
    q = random_orthogonal(2, seed=9)
    assert np.max(np.abs(reconstruct(model, whiten(model, X, q), q).values - X.values)) < 1e-8


def test_zero_latent_maps_to_mean(rng):
    _, X, _ = low_rank_dataset(rng)
    model = fit_whitening(X)
    assert_allclose(reconstruct(model, Dataset(values=np.zeros((1, 2)))).values[0], model.mu, atol=1e-14)


def test_basis_row_maps_to_scaled_column(rng):
    _, X, _ = low_rank_dataset(rng)
    model = fit_whitening(X)
    out = reconstruct(model, Dataset(values=[[1.0, 0.0]]), OrthogonalMatrix.identity(2)).values[0]
    assert_allclose(out, model.mu + model.U[:, 0] * model.s_sqrt[0], atol=1e-13)


def test_reconstruct_dimension_mismatch(rng):
    _, X, _ = low_rank_dataset(rng)
    with pytest.raises(DimensionMismatchError):
        reconstruct(fit_whitening(X), Dataset(values=np.zeros((1, 3))))


# ---------------------------------------------------------------------------
# Unsupervised adaptation
# ---------------------------------------------------------------------------

def test_identical_domains_need_no_rotation(rng):
    _, X, _ = low_rank_dataset(rng, rows=80)
    result = adapt_unsupervised(X, X, p=2)
    assert result.mmd_after < 1e-10
    assert_allclose(result.q_b.Q, np.eye(2), atol=1e-12)


def test_unsupervised_shapes_and_descent(small_domains):
    X_A, X_B = small_domains["X_A"], small_domains["X_B"]
    result = adapt_unsupervised(X_A, X_B, p=2)
    assert result.z_a.values.shape == (X_A.n_rows, 2)
    assert result.z_b.values.shape == (X_B.n_rows, 2)
    assert result.mmd_after <= result.mmd_before + 1e-12
    assert_allclose(result.z_b.values, result.z_b_prime.values @ result.q_b.Q)
    assert_array_equal(result.z_b.labels, X_B.labels)


def test_shared_dimension_is_min_of_ranks(rng):
    _, X_A, _ = low_rank_dataset(rng, latent=2, obs=6)
    X_B = Dataset(values=rng.standard_normal((100, 6)))
    model_a, model_b = fit_shared_whitening(X_A, X_B, p=4)
    assert model_a.p == model_b.p == 2


def test_invalid_p(rng):
    with pytest.raises(InvalidDataError):
        fit_shared_whitening(Dataset(values=rng.standard_normal((10, 3))), Dataset(values=rng.standard_normal((10, 3))), p=0)


# ---------------------------------------------------------------------------
# Semi-supervised adaptation
# ---------------------------------------------------------------------------

def test_restart_seed_points():
    points = restart_seed_points(3, 4, seed=1)
    assert len(points) == 4
    assert_array_equal(points[0][0].Q, np.eye(3))
    assert points[0][1] is None
    assert all(seed is not None for _, seed in points[1:])
    with pytest.raises(InvalidDataError):
        restart_seed_points(3, 0, seed=1)


def test_single_restart_matches_unsupervised(small_domains):
    X_A, X_B = small_domains["X_A"], small_domains["X_B"]
    labeled = X_B.subset(labeled_subset(X_B, 0.1, seed=1))
    outcome = adapt_semisupervised(X_A, X_B, labeled, p=2, n_restarts=1)
    plain = adapt_unsupervised(X_A, X_B, p=2)
    assert len(outcome.report) == 1
    assert outcome.chosen == 0
    assert_allclose(outcome.result.q_b.Q, plain.q_b.Q)


def test_selection_picks_lowest_labeled_error():
    X_A, X_B = anti_alignment_domains(n_per_class=100, seed=3)
    labeled = X_B.subset(labeled_subset(X_B, 0.1, seed=2))
    outcome = adapt_semisupervised(X_A, X_B, labeled, p=2, n_restarts=8, seed=5)
    errors = [record.labeled_error for record in outcome.report if not record.failed]
    assert outcome.report[outcome.chosen].labeled_error == min(errors)
    assert all(record.q_b is not None for record in outcome.report)


def test_threaded_restarts_match_sequential(small_domains):
    X_A, X_B = small_domains["X_A"], small_domains["X_B"]
    labeled = X_B.subset(labeled_subset(X_B, 0.1, seed=1))
    cfg = OptimizerConfig(max_iters=100)
    serial = adapt_semisupervised(X_A, X_B, labeled, p=2, ocfg=cfg, n_restarts=4, seed=9)
    threaded = adapt_semisupervised(X_A, X_B, labeled, p=2, ocfg=cfg, n_restarts=4, seed=9, workers=4)
    assert serial.chosen == threaded.chosen
    assert [r.model_dump() for r in serial.report] == [r.model_dump() for r in threaded.report]


def test_semisupervised_label_checks(small_domains):
    X_A, X_B = small_domains["X_A"], small_domains["X_B"]
    unlabeled_source = Dataset(values=X_A.values)
    with pytest.raises(DegenerateLabelsError, match="degenerate labels"):
        adapt_semisupervised(unlabeled_source, X_B, X_B.subset([0, 1]), p=2)
    foreign = Dataset(values=X_B.values[:2], labels=[7, 7])
    with pytest.raises(DegenerateLabelsError):
        adapt_semisupervised(X_A, X_B, foreign, p=2)
