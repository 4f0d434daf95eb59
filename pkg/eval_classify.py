"""
Binary logistic regression used to score adaptation quality downstream.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from errors import DegenerateLabelsError, DimensionMismatchError, InvalidDataError
from models import Dataset, LinearClassifier, TrainConfig

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MIN_STEP = 1e-12


def logistic_loss_and_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
) -> Tuple[float, np.ndarray]:
    """
    Mean cross-entropy plus (l2/2)||w||^2 and its gradient.
    `params` is the weight vector with the bias appended; the bias is not
    regularized.
    """
    w, b = params[:-1], params[-1]
    scores = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, scores) - y * scores) + 0.5 * l2 * (w @ w))
    residual = expit(scores) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ residual / len(y) + l2 * w
    grad[-1] = residual.mean()
    return loss, grad


def _binary_targets(Z: Dataset) -> np.ndarray:
    if not Z.has_labels:
        raise DegenerateLabelsError("training data has no labels")
    labels = Z.labels
    classes = np.unique(labels)
    if not np.all(np.isin(classes, (0, 1))):
        raise DegenerateLabelsError(f"labels must be 0/1, got classes {classes.tolist()}")
    if len(classes) < 2:
        raise DegenerateLabelsError(f"only class {classes.tolist()} present")
    return labels.astype(float)


def train_logistic(Z: Dataset, cfg: Optional[TrainConfig] = None) -> LinearClassifier:
    """
    Full-batch gradient descent from zeros on the L2-regularized
    cross-entropy. The step starts at cfg.learning_rate and is halved until
    the Armijo condition holds, so the loss never increases.
    """
    cfg = cfg or TrainConfig()
    y = _binary_targets(Z)
    X = Z.values

    params = np.zeros(X.shape[1] + 1)
    loss, grad = logistic_loss_and_grad(params, X, y, cfg.l2)
    step = cfg.learning_rate
    epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        grad_sq = float(grad @ grad)
        if np.sqrt(grad_sq) <= cfg.tol:
            break
        step = min(cfg.learning_rate, 2.0 * step)
        while True:
            candidate = params - step * grad
            cand_loss, cand_grad = logistic_loss_and_grad(candidate, X, y, cfg.l2)
            if cand_loss <= loss - ARMIJO_C * step * grad_sq:
                break
            step *= 0.5
            if step < MIN_STEP:
                break
        if step < MIN_STEP:
            logger.debug(f"Logistic regression step collapsed at epoch {epoch}")
            break
        params, loss, grad = candidate, cand_loss, cand_grad

    logger.debug(f"Logistic regression finished after {epoch} epochs, loss={loss:.6e}")
    return LinearClassifier(weights=params[:-1], bias=float(params[-1]))


def decision_function(model: LinearClassifier, Z: Dataset) -> np.ndarray:
    values = Z.values if isinstance(Z, Dataset) else np.asarray(Z, dtype=float)
    if values.shape[1] != len(model.weights):
        raise DimensionMismatchError("features", len(model.weights), values.shape[1])
    return values @ model.weights + model.bias


def predict(model: LinearClassifier, Z: Dataset) -> np.ndarray:
    """Label 1 iff w^T z + b >= 0."""
    return (decision_function(model, Z) >= 0).astype(np.int64)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionMismatchError("predictions", truth.shape, pred.shape)
    if pred.size == 0:
        raise InvalidDataError("accuracy of an empty prediction set")
    return float(np.mean(pred == truth))
