#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Data models for the shift-correction pipeline.
Contains the numeric domain types (datasets, factorizations, orthogonal
matrices, fitted whitening models), the configuration models, and the
report models written by the experiments.
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from errors import (
    DimensionMismatchError,
    InvalidDataError,
    NotOrthogonalError,
)

ORTHOGONALITY_TOL = 1e-8
COLUMN_ORTHONORMALITY_TOL = 1e-10


def _frozen_array(value: Any, ndim: int, name: str) -> np.ndarray:
    """Copy `value` into a read-only float array of the given rank."""
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidDataError(f"{name} is not numeric ({exc})")
    if arr.ndim != ndim:
        raise DimensionMismatchError(name, f"{ndim}-d array", f"{arr.ndim}-d array")
    if not np.all(np.isfinite(arr)):
        raise InvalidDataError(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


###########################################
# Numeric domain types
###########################################

class Dataset(_ArrayModel):
    """Rows are instances, columns are features; labels are optional."""
    values: np.ndarray
    labels: Optional[np.ndarray] = None

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value):
        return _frozen_array(value, 2, "values")

    @field_validator("labels", mode="before")
    @classmethod
    def _check_labels(cls, value):
        if value is None:
            return None
        arr = _frozen_array(value, 1, "labels")
        if not np.all(arr == np.round(arr)):
            raise InvalidDataError("labels must be integers")
        labels = arr.astype(np.int64)
        labels.setflags(write=False)
        return labels

    @model_validator(mode="after")
    def _check_label_length(self):
        if self.labels is not None and len(self.labels) != self.values.shape[0]:
            raise DimensionMismatchError("labels", self.values.shape[0], len(self.labels))
        return self

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(values=self.values[indices], labels=labels)

    def with_values(self, values: np.ndarray) -> "Dataset":
        """Same labels, new feature matrix (row count must match)."""
        return Dataset(values=values, labels=self.labels)


class Moments(_ArrayModel):
    mean: np.ndarray
    covariance: np.ndarray

    @field_validator("mean", mode="before")
    @classmethod
    def _check_mean(cls, value):
        return _frozen_array(value, 1, "mean")

    @field_validator("covariance", mode="before")
    @classmethod
    def _check_covariance(cls, value):
        return _frozen_array(value, 2, "covariance")


class EigenFactors(_ArrayModel):
    """Retained eigenpairs: columns of U, eigenvalues S in non-increasing order."""
    U: np.ndarray
    S: np.ndarray

    @field_validator("U", mode="before")
    @classmethod
    def _check_u(cls, value):
        return _frozen_array(value, 2, "U")

    @field_validator("S", mode="before")
    @classmethod
    def _check_s(cls, value):
        return _frozen_array(value, 1, "S")

    @model_validator(mode="after")
    def _check_factors(self):
        if self.U.shape[1] != len(self.S):
            raise DimensionMismatchError("eigenvalues", self.U.shape[1], len(self.S))
        deviation = np.max(np.abs(self.U.T @ self.U - np.eye(len(self.S))), initial=0.0)
        if deviation > COLUMN_ORTHONORMALITY_TOL:
            raise NotOrthogonalError(deviation)
        if np.any(self.S <= 0) or np.any(np.diff(self.S) > 0):
            raise InvalidDataError("eigenvalues must be positive and non-increasing")
        return self

    @property
    def p(self) -> int:
        return len(self.S)


class OrthogonalMatrix(_ArrayModel):
    Q: np.ndarray

    @field_validator("Q", mode="before")
    @classmethod
    def _check_q(cls, value):
        arr = _frozen_array(value, 2, "Q")
        if arr.shape[0] != arr.shape[1]:
            raise DimensionMismatchError("Q", "square matrix", arr.shape)
        deviation = np.max(np.abs(arr.T @ arr - np.eye(arr.shape[0])))
        if deviation > ORTHOGONALITY_TOL:
            raise NotOrthogonalError(deviation)
        return arr

    @classmethod
    def identity(cls, dim: int) -> "OrthogonalMatrix":
        return cls(Q=np.eye(dim))

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.Q))


class WhiteningModel(_ArrayModel):
    """Per-domain mean, top-p eigenvectors and square roots of their eigenvalues."""
    mu: np.ndarray
    U: np.ndarray
    s_sqrt: np.ndarray

    @field_validator("mu", "s_sqrt", mode="before")
    @classmethod
    def _check_vectors(cls, value, info):
        return _frozen_array(value, 1, info.field_name)

    @field_validator("U", mode="before")
    @classmethod
    def _check_u(cls, value):
        return _frozen_array(value, 2, "U")

    @model_validator(mode="after")
    def _check_model(self):
        if self.U.shape != (len(self.mu), len(self.s_sqrt)):
            raise DimensionMismatchError("U", (len(self.mu), len(self.s_sqrt)), self.U.shape)
        deviation = np.max(np.abs(self.U.T @ self.U - np.eye(self.p)), initial=0.0)
        if deviation > COLUMN_ORTHONORMALITY_TOL:
            raise NotOrthogonalError(deviation)
        if np.any(self.s_sqrt <= 0):
            raise InvalidDataError("s_sqrt entries must be positive")
        return self

    @property
    def p(self) -> int:
        return len(self.s_sqrt)

    @property
    def obs_dim(self) -> int:
        return len(self.mu)

    def truncated(self, p: int) -> "WhiteningModel":
        """Keep the leading `p` components."""
        if p < 1 or p > self.p:
            raise DimensionMismatchError("retained dimension", f"1..{self.p}", p)
        return WhiteningModel(mu=self.mu, U=self.U[:, :p], s_sqrt=self.s_sqrt[:p])


class AffineMap(_ArrayModel):
    """x = theta z + mu."""
    theta: np.ndarray
    mu: np.ndarray

    @field_validator("theta", mode="before")
    @classmethod
    def _check_theta(cls, value):
        return _frozen_array(value, 2, "theta")

    @field_validator("mu", mode="before")
    @classmethod
    def _check_mu(cls, value):
        return _frozen_array(value, 1, "mu")

    @model_validator(mode="after")
    def _check_map(self):
        if self.theta.shape[0] != len(self.mu):
            raise DimensionMismatchError("mu", self.theta.shape[0], len(self.mu))
        if np.linalg.matrix_rank(self.theta) < self.theta.shape[1]:
            raise InvalidDataError("theta must have full column rank")
        return self

    @property
    def latent_dim(self) -> int:
        return self.theta.shape[1]


###########################################
# Configuration models
###########################################

class KernelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_sq: float = Field(2.0, gt=0, allow_inf_nan=False)


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float = Field(0.1, gt=0, allow_inf_nan=False)
    max_iters: int = Field(500, ge=1)
    f_tol: float = Field(1e-9, ge=0)
    g_tol: float = Field(1e-12, ge=0)
    backtracking: bool = True
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    max_backtracks: int = Field(30, ge=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.1, gt=0, allow_inf_nan=False)
    epochs: int = Field(2000, ge=1)
    l2: float = Field(1e-4, ge=0, allow_inf_nan=False)
    tol: float = Field(1e-10, ge=0)


class MixtureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    weights: List[float]
    means: List[List[float]]
    covariances: List[List[List[float]]]
    n: int = Field(ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_spec(self):
        k = len(self.weights)
        if k == 0 or len(self.means) != k or len(self.covariances) != k:
            raise InvalidDataError("weights, means and covariances must have the same non-zero length")
        weights = np.asarray(self.weights, dtype=float)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidDataError("mixture weights must be non-negative and sum to 1")
        dim = len(self.means[0])
        for mean, cov in zip(self.means, self.covariances):
            cov = np.asarray(cov, dtype=float)
            if len(mean) != dim or cov.shape != (dim, dim):
                raise DimensionMismatchError("mixture component", dim, (len(mean), cov.shape))
            if np.max(np.abs(cov - cov.T)) > 1e-12 or np.min(np.linalg.eigvalsh(cov)) < -1e-12:
                raise InvalidDataError("mixture covariances must be symmetric PSD")
        return self

    @property
    def dim(self) -> int:
        return len(self.means[0])


###########################################
# Optimizer and adaptation outputs
###########################################

class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    objective: float
    grad_norm: float
    step_size: float


class OptTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: List[IterationRecord] = Field(default_factory=list)
    converged: bool = False
    backtracking_exhausted: bool = False
    stop_reason: str = ""

    @property
    def objectives(self) -> List[float]:
        return [record.objective for record in self.iterations]

    def __len__(self) -> int:
        return len(self.iterations)


class AdaptationResult(_ArrayModel):
    z_a: Dataset
    z_b: Dataset
    z_b_prime: Dataset
    q_b: OrthogonalMatrix
    q0: OrthogonalMatrix
    mmd_before: float
    mmd_after: float
    trace: OptTrace
    model_a: WhiteningModel
    model_b: WhiteningModel

    @property
    def p(self) -> int:
        return self.q_b.dim


class RestartRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    start: Literal["identity", "random"]
    seed: Optional[int] = None
    start_det: Optional[float] = None
    mmd_before: Optional[float] = None
    mmd_after: Optional[float] = None
    labeled_error: Optional[float] = None
    iterations: int = 0
    q_b: Optional[List[List[float]]] = None
    failed: bool = False
    error: Optional[str] = None


class LinearClassifier(_ArrayModel):
    weights: np.ndarray
    bias: float = Field(allow_inf_nan=False)

    @field_validator("weights", mode="before")
    @classmethod
    def _check_weights(cls, value):
        return _frozen_array(value, 1, "weights")


###########################################
# Experiment outputs
###########################################

class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    family: Literal["rotation", "reflection"]
    mmd2: float


class ScenarioResult(BaseModel):
    name: str
    accuracy: Optional[float] = Field(None, ge=0, le=1)
    mmd_before: Optional[float] = None
    mmd_after: Optional[float] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class TaskResult(BaseModel):
    task: str
    classes: List[int]
    skipped: bool = False
    reason: Optional[str] = None
    baseline_accuracy: Optional[float] = Field(None, ge=0, le=1)
    unsupervised_accuracy: Optional[float] = Field(None, ge=0, le=1)
    semi_supervised_accuracy: Optional[float] = Field(None, ge=0, le=1)
    delta_unsupervised: Optional[float] = None
    delta_semi_supervised: Optional[float] = None
    mmd_before: Optional[float] = None
    mmd_after: Optional[float] = None
    chosen_restart: Optional[int] = None
    seed: Optional[int] = None
    p: Optional[int] = None
    replicate: Optional[int] = None


class ExperimentReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(1, alias="schema")
    config: Dict[str, Any] = Field(default_factory=dict)
    scenarios: List[ScenarioResult] = Field(default_factory=list)
    tasks: List[TaskResult] = Field(default_factory=list)
    seeds: Dict[str, int] = Field(default_factory=dict)
    runtime_ms: Optional[float] = None

    def scenario(self, name: str) -> ScenarioResult:
        for scenario in self.scenarios:
            if scenario.name == name:
                return scenario
        raise KeyError(name)
