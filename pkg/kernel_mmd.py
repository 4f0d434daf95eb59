"""
Gaussian kernel, the biased MMD^2 two-sample statistic and its gradient
with respect to the transposed alignment matrix.
"""

import logging
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from errors import DimensionMismatchError, InvalidDataError
from models import Dataset, KernelConfig, OrthogonalMatrix

logger = logging.getLogger(__name__)

ArrayLike = Union[Dataset, np.ndarray]


def _as_matrix(X: ArrayLike, name: str) -> np.ndarray:
    if isinstance(X, Dataset):
        return X.values
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatchError(name, "2-d array", f"{arr.ndim}-d array")
    return arr


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise InvalidDataError("MMD needs non-empty samples")
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError("feature dimension", x.shape[1], y.shape[1])


def gaussian_kernel(x, y, cfg: Optional[KernelConfig] = None) -> float:
    """k(x, y) = exp(-||x - y||^2 / (2 sigma^2))."""
    cfg = cfg or KernelConfig()
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatchError("kernel arguments", x.shape, y.shape)
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * cfg.sigma_sq)))


def kernel_matrix(A: ArrayLike, B: ArrayLike, cfg: Optional[KernelConfig] = None) -> np.ndarray:
    """Pairwise Gaussian kernel values, rows of A against rows of B."""
    cfg = cfg or KernelConfig()
    a, b = _as_matrix(A, "A"), _as_matrix(B, "B")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("feature dimension", a.shape[1], b.shape[1])
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * cfg.sigma_sq))


def mmd2_biased(X: ArrayLike, Y: ArrayLike, cfg: Optional[KernelConfig] = None) -> float:
    """
    Biased empirical MMD^2:
    (1/m^2) sum k(x_i, x_j) + (1/n^2) sum k(y_i, y_j) - (2/mn) sum k(x_i, y_j).
    """
    cfg = cfg or KernelConfig()
    x, y = _as_matrix(X, "X"), _as_matrix(Y, "Y")
    _check_pair(x, y)
    m, n = x.shape[0], y.shape[0]
    k_xx = kernel_matrix(x, x, cfg).sum()
    k_yy = kernel_matrix(y, y, cfg).sum()
    k_xy = kernel_matrix(x, y, cfg).sum()
    return float(k_xx / m**2 + k_yy / n**2 - 2.0 * k_xy / (m * n))


def mmd2_naive(X: ArrayLike, Y: ArrayLike, cfg: Optional[KernelConfig] = None) -> float:
    """Quadratic double-loop reference for mmd2_biased, row-major accumulation."""
    cfg = cfg or KernelConfig()
    x, y = _as_matrix(X, "X"), _as_matrix(Y, "Y")
    _check_pair(x, y)
    m, n = x.shape[0], y.shape[0]

    k_xx = 0.0
    for i in range(m):
        for j in range(m):
            k_xx += gaussian_kernel(x[i], x[j], cfg)
    k_yy = 0.0
    for i in range(n):
        for j in range(n):
            k_yy += gaussian_kernel(y[i], y[j], cfg)
    k_xy = 0.0
    for i in range(m):
        for j in range(n):
            k_xy += gaussian_kernel(x[i], y[j], cfg)
    return k_xx / m**2 + k_yy / n**2 - 2.0 * k_xy / (m * n)


def mmd_gradient_wrt_q(
    Z_A: ArrayLike,
    Z_B: ArrayLike,
    Q: Union[OrthogonalMatrix, np.ndarray],
    cfg: Optional[KernelConfig] = None,
) -> np.ndarray:
    """
    Gradient of mmd2_biased(Z_A, Z_B Q) with respect to Q^T:

        G = -(2/mn) sum_ij exp(-||z_a_i - Q^T z_b_j||^2 / (2 sigma^2)) z_a_i z_b_j^T / sigma^2

    Only the cross term depends on Q on the orthogonal group; the
    within-sample terms are invariant under Q and drop out. Transpose the
    result to get the gradient with respect to Q.
    """
    cfg = cfg or KernelConfig()
    z_a, z_b = _as_matrix(Z_A, "Z_A"), _as_matrix(Z_B, "Z_B")
    q = Q.Q if isinstance(Q, OrthogonalMatrix) else np.asarray(Q, dtype=float)
    _check_pair(z_a, z_b)
    if q.shape != (z_b.shape[1], z_b.shape[1]):
        raise DimensionMismatchError("Q", (z_b.shape[1], z_b.shape[1]), q.shape)
    return gradient_from_cross_kernel(z_a, z_b, kernel_matrix(z_a, z_b @ q, cfg), cfg)


def gradient_from_cross_kernel(
    z_a: np.ndarray, z_b: np.ndarray, k: np.ndarray, cfg: KernelConfig
) -> np.ndarray:
    """Gradient w.r.t. Q^T given the cross kernel matrix k_ij = k(z_a_i, Q^T z_b_j)."""
    m, n = z_a.shape[0], z_b.shape[0]
    return -(2.0 / (m * n * cfg.sigma_sq)) * (z_a.T @ k @ z_b)
