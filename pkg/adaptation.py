"""
End-to-end domain-shift correction.

Both domains are whitened (mean removed, projected on their top-p
eigenvectors, scaled to unit variance), then the target projection is
rotated by the orthogonal Q_B that minimizes MMD^2 against the source
projection. The semi-supervised variant restarts the optimizer from
several seed points and keeps the alignment whose source-trained
classifier makes the fewest mistakes on a few labeled target instances.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg as sp

from errors import (
    AllRestartsFailedError,
    DegenerateLabelsError,
    DimensionMismatchError,
    InsufficientInstancesError,
    InvalidDataError,
    RankDeficientError,
    ShiftCorrectionError,
)
from eval_classify import accuracy, predict, train_logistic
from kernel_mmd import gradient_from_cross_kernel, kernel_matrix
from linalg_core import empirical_moments, psd_eigendecomposition, random_orthogonal
from models import (
    AdaptationResult,
    AffineMap,
    Dataset,
    KernelConfig,
    LinearClassifier,
    OptimizerConfig,
    OrthogonalMatrix,
    RestartRecord,
    TrainConfig,
    WhiteningModel,
)
from stiefel_opt import minimize_on_stiefel

logger = logging.getLogger(__name__)


###########################################
# Whitening
###########################################

def fit_whitening(X: Dataset, p: Optional[int] = None, rank_tol: Optional[float] = None) -> WhiteningModel:
    """Fit mean, top-p eigenvectors and eigenvalue roots of X's covariance."""
    if p is not None:
        if p < 1:
            raise InvalidDataError(f"p must be >= 1, got {p}")
        if X.n_rows < p + 1:
            raise InsufficientInstancesError(X.n_rows, p + 1)
    moments = empirical_moments(X)
    factors = psd_eigendecomposition(moments.covariance, rank_tol=rank_tol)
    if p is not None and p > factors.p:
        raise RankDeficientError(p, factors.p)
    keep = factors.p if p is None else p
    return WhiteningModel(mu=moments.mean, U=factors.U[:, :keep], s_sqrt=np.sqrt(factors.S[:keep]))


def _check_obs_dim(model: WhiteningModel, X: Dataset) -> None:
    if X.n_features != model.obs_dim:
        raise DimensionMismatchError("observation dimension", model.obs_dim, X.n_features)


def whiten(model: WhiteningModel, X: Dataset, q: Optional[OrthogonalMatrix] = None) -> Dataset:
    """z = Q^T S^{-1/2} U^T (x - mu), row-wise; Q defaults to the identity."""
    _check_obs_dim(model, X)
    z = (X.values - model.mu) @ model.U / model.s_sqrt
    if q is not None:
        if q.dim != model.p:
            raise DimensionMismatchError("q", model.p, q.dim)
        z = z @ q.Q
    return X.with_values(z)


def reconstruct(model: WhiteningModel, Z: Dataset, q: Optional[OrthogonalMatrix] = None) -> Dataset:
    """x = theta z + mu with theta = U S^{1/2} Q; inverse of whiten on the retained subspace."""
    if Z.n_features != model.p:
        raise DimensionMismatchError("latent dimension", model.p, Z.n_features)
    z = Z.values
    if q is not None:
        if q.dim != model.p:
            raise DimensionMismatchError("q", model.p, q.dim)
        z = z @ q.Q.T
    return Z.with_values((z * model.s_sqrt) @ model.U.T + model.mu)


def affine_map_from_whitening(model: WhiteningModel, q: Optional[OrthogonalMatrix] = None) -> AffineMap:
    theta = model.U * model.s_sqrt
    if q is not None:
        theta = theta @ q.Q
    return AffineMap(theta=theta, mu=model.mu)


def pseudoinverse_project(amap: AffineMap, X: Dataset) -> Dataset:
    """Least-squares inverse of x = theta z + mu: z = (theta^T theta)^{-1} theta^T (x - mu)."""
    if X.n_features != len(amap.mu):
        raise DimensionMismatchError("observation dimension", len(amap.mu), X.n_features)
    theta = amap.theta
    rhs = theta.T @ (X.values - amap.mu).T
    z = sp.solve(theta.T @ theta, rhs, assume_a="pos").T
    return X.with_values(z)


def fit_shared_whitening(
    X_A: Dataset,
    X_B: Dataset,
    p: Optional[int] = None,
    rank_tol: Optional[float] = None,
) -> Tuple[WhiteningModel, WhiteningModel]:
    """
    Whitening models for both domains with a common latent dimension
    p = min(requested p, positive rank of Sigma_A, positive rank of Sigma_B).
    """
    if p is not None and p < 1:
        raise InvalidDataError(f"p must be >= 1, got {p}")
    full_a = fit_whitening(X_A, rank_tol=rank_tol)
    full_b = fit_whitening(X_B, rank_tol=rank_tol)
    shared = min(full_a.p, full_b.p) if p is None else min(p, full_a.p, full_b.p)
    if p is not None and shared < p:
        logger.warning(f"Requested p={p} reduced to {shared} (positive ranks: source {full_a.p}, target {full_b.p})")
    for X in (X_A, X_B):
        if X.n_rows < shared + 1:
            raise InsufficientInstancesError(X.n_rows, shared + 1)
    logger.info(f"Whitening fitted with shared p={shared} (source dim {full_a.obs_dim}, target dim {full_b.obs_dim})")
    return full_a.truncated(shared), full_b.truncated(shared)


###########################################
# MMD alignment
###########################################

class AlignmentObjective:
    """
    F(Q) = MMD^2(Z_A, Z_B' Q) and its gradient with respect to Q.

    The within-sample kernel sums do not depend on Q, so they are
    computed once; the cross kernel matrix is cached for the last Q so the
    objective and the gradient at the same point share it.
    """

    def __init__(self, z_a: np.ndarray, z_b_prime: np.ndarray, kcfg: KernelConfig):
        if z_a.shape[1] != z_b_prime.shape[1]:
            raise DimensionMismatchError("latent dimension", z_a.shape[1], z_b_prime.shape[1])
        self.z_a = z_a
        self.z_b = z_b_prime
        self.kcfg = kcfg
        m, n = z_a.shape[0], z_b_prime.shape[0]
        self._self_terms = (
            kernel_matrix(z_a, z_a, kcfg).sum() / m**2
            + kernel_matrix(z_b_prime, z_b_prime, kcfg).sum() / n**2
        )
        self._cross_scale = 2.0 / (m * n)
        self._cached_q: Optional[np.ndarray] = None
        self._cached_k: Optional[np.ndarray] = None

    def _cross_kernel(self, q: np.ndarray) -> np.ndarray:
        if self._cached_q is None or not np.array_equal(q, self._cached_q):
            self._cached_q = np.array(q, copy=True)
            self._cached_k = kernel_matrix(self.z_a, self.z_b @ q, self.kcfg)
        return self._cached_k

    def value(self, q: np.ndarray) -> float:
        return float(self._self_terms - self._cross_scale * self._cross_kernel(q).sum())

    def gradient(self, q: np.ndarray) -> np.ndarray:
        """d F / d Q, the transpose of the gradient with respect to Q^T."""
        return gradient_from_cross_kernel(self.z_a, self.z_b, self._cross_kernel(q), self.kcfg).T


def align_whitened(
    z_a: Dataset,
    z_b_prime: Dataset,
    model_a: WhiteningModel,
    model_b: WhiteningModel,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    q0: Optional[OrthogonalMatrix] = None,
) -> AdaptationResult:
    """Run the Stiefel optimizer on F(Q_B) = MMD^2(Z_A, Z_B' Q_B) from q0."""
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    p = z_a.n_features
    q0 = q0 or OrthogonalMatrix.identity(p)
    if q0.dim != p:
        raise DimensionMismatchError("q0", p, q0.dim)

    objective = AlignmentObjective(z_a.values, z_b_prime.values, kcfg)
    mmd_before = objective.value(q0.Q)
    q_b, mmd_after, trace = minimize_on_stiefel(objective.value, objective.gradient, q0, ocfg)
    logger.info(
        f"Alignment finished ({trace.stop_reason}, {len(trace)} records): "
        f"MMD^2 {mmd_before:.6e} -> {mmd_after:.6e}"
    )
    return AdaptationResult(
        z_a=z_a,
        z_b=z_b_prime.with_values(z_b_prime.values @ q_b.Q),
        z_b_prime=z_b_prime,
        q_b=q_b,
        q0=q0,
        mmd_before=mmd_before,
        mmd_after=mmd_after,
        trace=trace,
        model_a=model_a,
        model_b=model_b,
    )


def adapt_unsupervised(
    X_A: Dataset,
    X_B: Dataset,
    p: Optional[int] = None,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    q0: Optional[OrthogonalMatrix] = None,
    rank_tol: Optional[float] = None,
) -> AdaptationResult:
    """
    Map source and target into a common p-dimensional space.

    The source keeps Q_A = I; the target projection is rotated by the
    Q_B found by minimizing MMD^2 from the seed point q0 (identity by
    default).
    """
    model_a, model_b = fit_shared_whitening(X_A, X_B, p, rank_tol)
    z_a = whiten(model_a, X_A)
    z_b_prime = whiten(model_b, X_B)
    return align_whitened(z_a, z_b_prime, model_a, model_b, kcfg, ocfg, q0)


###########################################
# Semi-supervised restart selection
###########################################

class SemiSupervisedOutcome(NamedTuple):
    result: AdaptationResult
    classifier: LinearClassifier
    report: List[RestartRecord]
    chosen: int


def restart_seed_points(p: int, n_restarts: int, seed: int) -> List[Tuple[OrthogonalMatrix, Optional[int]]]:
    """Restart 0 is the identity; the others are seeded random orthogonal matrices."""
    if n_restarts < 1:
        raise InvalidDataError(f"n_restarts must be >= 1, got {n_restarts}")
    points: List[Tuple[OrthogonalMatrix, Optional[int]]] = [(OrthogonalMatrix.identity(p), None)]
    if n_restarts > 1:
        children = np.random.SeedSequence(seed).spawn(n_restarts - 1)
        for child in children:
            child_seed = int(child.generate_state(1)[0])
            points.append((random_orthogonal(p, child_seed), child_seed))
    return points


def _check_semisupervised_labels(X_A: Dataset, labeled_b: Dataset) -> None:
    if not X_A.has_labels:
        raise DegenerateLabelsError("source data has no labels")
    if labeled_b.n_rows == 0 or not labeled_b.has_labels:
        raise DegenerateLabelsError("labeled target set is empty or unlabeled")
    unknown = np.setdiff1d(np.unique(labeled_b.labels), np.unique(X_A.labels))
    if unknown.size:
        raise DegenerateLabelsError(f"target labels {unknown.tolist()} never appear in the source")


def adapt_semisupervised(
    X_A: Dataset,
    X_B: Dataset,
    labeled_b: Dataset,
    p: Optional[int] = None,
    kcfg: Optional[KernelConfig] = None,
    ocfg: Optional[OptimizerConfig] = None,
    n_restarts: int = 10,
    seed: int = 0,
    train_cfg: Optional[TrainConfig] = None,
    workers: int = 1,
    rank_tol: Optional[float] = None,
) -> SemiSupervisedOutcome:
    """
    Multi-restart alignment, selected on labeled target instances.

    Each restart runs the unsupervised alignment from its own seed point.
    A logistic regression trained on the whitened source (Z_A, y_A) is
    scored on the labeled target instances after they are whitened with
    the target model and rotated by the restart's Q_B. The restart with the
    lowest labeled error wins; ties go to lower MMD^2, then lower index.
    labeled_b is never used to fit moments.

    Restart failures are recorded in the report and only raise when every
    restart fails.
    """
    kcfg = kcfg or KernelConfig()
    ocfg = ocfg or OptimizerConfig()
    _check_semisupervised_labels(X_A, labeled_b)

    model_a, model_b = fit_shared_whitening(X_A, X_B, p, rank_tol)
    z_a = whiten(model_a, X_A)
    z_b_prime = whiten(model_b, X_B)
    z_labeled = whiten(model_b, labeled_b)
    # Q_A = I for every restart, so one source classifier serves them all.
    classifier = train_logistic(z_a, train_cfg)

    seed_points = restart_seed_points(model_a.p, n_restarts, seed)

    def run_restart(index: int) -> Tuple[RestartRecord, Optional[AdaptationResult]]:
        q0, q_seed = seed_points[index]
        start = "identity" if index == 0 else "random"
        try:
            result = align_whitened(z_a, z_b_prime, model_a, model_b, kcfg, ocfg, q0)
        except ShiftCorrectionError as exc:
            logger.warning(f"Restart {index} failed: {exc}")
            record = RestartRecord(index=index, start=start, seed=q_seed, start_det=q0.det, failed=True, error=str(exc))
            return record, None
        rotated = z_labeled.with_values(z_labeled.values @ result.q_b.Q)
        error = 1.0 - accuracy(predict(classifier, rotated), labeled_b.labels)
        record = RestartRecord(
            index=index,
            start=start,
            seed=q_seed,
            start_det=q0.det,
            mmd_before=result.mmd_before,
            mmd_after=result.mmd_after,
            labeled_error=error,
            iterations=len(result.trace),
            q_b=result.q_b.Q.tolist(),
        )
        return record, result

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_restart, range(n_restarts)))
    else:
        outcomes = [run_restart(index) for index in range(n_restarts)]

    report = [record for record, _ in outcomes]
    successful = [(record, result) for record, result in outcomes if result is not None]
    if not successful:
        raise AllRestartsFailedError(n_restarts, report[-1].error or "unknown")

    best_record, best_result = min(
        successful, key=lambda pair: (pair[0].labeled_error, pair[0].mmd_after, pair[0].index)
    )
    logger.info(
        f"Selected restart {best_record.index} of {n_restarts}: labeled error "
        f"{best_record.labeled_error:.4f}, MMD^2 {best_record.mmd_after:.6e}"
    )
    return SemiSupervisedOutcome(result=best_result, classifier=classifier, report=report, chosen=best_record.index)
