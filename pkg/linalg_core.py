"""
Dense linear-algebra primitives: empirical moments, rank-aware PSD
eigendecomposition and orthogonal-matrix constructors.

All functions are pure; outputs are read-only arrays wrapped in models.
"""

import logging
from typing import Optional, Union

import numpy as np
from scipy import linalg as sp

from errors import (
    AsymmetricMatrixError,
    DegenerateCovarianceError,
    DimensionMismatchError,
    InsufficientInstancesError,
    InvalidDataError,
)
from models import Dataset, EigenFactors, Moments, OrthogonalMatrix

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
# Default rank threshold is relative to the largest eigenvalue; the
# absolute floor catches all-zero covariances polluted by rounding.
RELATIVE_RANK_TOL = 1e-8
ABSOLUTE_RANK_TOL = 1e-12


def empirical_moments(X: Dataset) -> Moments:
    """Column mean and population covariance (divisor = row count)."""
    values = X.values
    if values.shape[0] < 2:
        raise InsufficientInstancesError(values.shape[0], 2)
    mean = values.mean(axis=0)
    centered = values - mean
    covariance = centered.T @ centered / values.shape[0]
    covariance = 0.5 * (covariance + covariance.T)
    return Moments(mean=mean, covariance=covariance)


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def psd_eigendecomposition(
    sigma: Union[np.ndarray, Moments],
    rank_tol: Optional[float] = None,
    p_max: Optional[int] = None,
) -> EigenFactors:
    """
    Eigenpairs of a symmetric PSD matrix with eigenvalue > rank_tol.

    Eigenvalues come back in descending order (ties keep their original
    index order) and columns are sign-normalized, so the output is
    deterministic across platforms.

    Args:
        sigma: Symmetric matrix (or Moments, whose covariance is used).
        rank_tol: Eigenvalues at or below this are dropped. Defaults to
            1e-8 times the largest eigenvalue.
        p_max: Optional cap on the number of retained components.
    """
    if isinstance(sigma, Moments):
        sigma = sigma.covariance
    matrix = np.asarray(sigma, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError("covariance", "square matrix", matrix.shape)
    if not np.all(np.isfinite(matrix)):
        raise InvalidDataError("covariance contains NaN or Inf")

    deviation = float(np.max(np.abs(matrix - matrix.T), initial=0.0))
    if deviation > SYMMETRY_TOL:
        raise AsymmetricMatrixError(deviation)
    if p_max is not None and p_max < 1:
        raise DimensionMismatchError("p_max", ">= 1", p_max)

    eigenvalues, eigenvectors = sp.eigh(0.5 * (matrix + matrix.T))
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]

    if rank_tol is None:
        rank_tol = max(RELATIVE_RANK_TOL * eigenvalues[0], ABSOLUTE_RANK_TOL)
    elif rank_tol <= 0:
        raise InvalidDataError("rank_tol must be positive")

    keep = eigenvalues > rank_tol
    if not np.any(keep):
        raise DegenerateCovarianceError(f"no eigenvalue above {rank_tol:.3e}")
    eigenvalues = eigenvalues[keep]
    eigenvectors = eigenvectors[:, keep]
    if p_max is not None:
        eigenvalues = eigenvalues[:p_max]
        eigenvectors = eigenvectors[:, :p_max]

    logger.debug(f"Retained {len(eigenvalues)} of {matrix.shape[0]} eigenpairs (rank_tol={rank_tol:.3e})")
    return EigenFactors(U=_sign_normalize(eigenvectors), S=eigenvalues)


def random_orthogonal(dim: int, seed: int) -> OrthogonalMatrix:
    """Orthogonalize a standard-normal matrix (QR with sign correction)."""
    if dim < 1:
        raise DimensionMismatchError("dim", ">= 1", dim)
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return OrthogonalMatrix(Q=q * signs)


def rotation_2d(alpha: float) -> OrthogonalMatrix:
    c, s = np.cos(alpha), np.sin(alpha)
    return OrthogonalMatrix(Q=[[c, -s], [s, c]])


def reflection_2d(alpha: float) -> OrthogonalMatrix:
    c, s = np.cos(alpha), np.sin(alpha)
    return OrthogonalMatrix(Q=[[-c, -s], [-s, c]])
