"""
Feasible descent on the orthogonal group with the Cayley transform.

Each step builds the skew-symmetric A = G X^T - X G^T and moves along
the curve Y(tau) = (I + tau/2 A)^{-1} (I - tau/2 A) X, which stays
orthogonal for every tau. Halving backtracking keeps the objective
sequence non-increasing.
"""

import logging
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg as sp

from errors import CayleySingularError, DimensionMismatchError, InvalidDataError, ObjectiveDivergedError
from models import IterationRecord, OptimizerConfig, OptTrace, OrthogonalMatrix

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

# Reciprocal condition number below which I + (tau/2)A counts as singular.
SINGULAR_RCOND = 1e-12


def skew_direction(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """A = G X^T - X G^T, exactly skew-symmetric by construction."""
    a = G @ X.T
    return a - a.T


def _cayley_update(x: np.ndarray, g: np.ndarray, tau: float) -> np.ndarray:
    a = skew_direction(x, g)
    half = 0.5 * tau * a
    eye = np.eye(x.shape[0])
    lhs = eye + half
    if 1.0 / np.linalg.cond(lhs) < SINGULAR_RCOND:
        raise CayleySingularError(tau)
    try:
        return sp.solve(lhs, (eye - half) @ x)
    except (sp.LinAlgError, ValueError):
        raise CayleySingularError(tau)


def cayley_step(
    X: Union[OrthogonalMatrix, np.ndarray],
    G: np.ndarray,
    tau: float,
) -> OrthogonalMatrix:
    """One Cayley-transform step from X along the gradient G with step size tau."""
    x = X.Q if isinstance(X, OrthogonalMatrix) else np.asarray(X, dtype=float)
    g = np.asarray(G, dtype=float)
    if g.shape != x.shape:
        raise DimensionMismatchError("gradient", x.shape, g.shape)
    if not tau > 0:
        raise InvalidDataError("tau must be positive")
    return OrthogonalMatrix(Q=_cayley_update(x, g, tau))


def minimize_on_stiefel(
    objective: Objective,
    gradient: Gradient,
    X0: OrthogonalMatrix,
    cfg: Optional[OptimizerConfig] = None,
) -> Tuple[OrthogonalMatrix, float, OptTrace]:
    """
    Minimize `objective` over square orthogonal matrices starting at X0.

    Stops after cfg.max_iters steps, when |F_{t+1} - F_t| < cfg.f_tol, or
    when the norm of A falls to cfg.g_tol. With backtracking on, a step
    that increases F is retried with tau multiplied by cfg.backtrack_factor,
    up to cfg.max_backtracks times; if all retries fail the run stops and
    the trace is flagged.

    Returns:
        The best iterate seen, its objective value, and the trace.
    """
    cfg = cfg or OptimizerConfig()
    x = np.array(X0.Q, dtype=float)

    f = float(objective(x))
    if not np.isfinite(f):
        raise ObjectiveDivergedError(0)
    best_x, best_f = x, f

    records: List[IterationRecord] = []
    converged = False
    exhausted = False
    stop_reason = "max_iters"

    for t in range(1, cfg.max_iters + 1):
        g = np.asarray(gradient(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ObjectiveDivergedError(t)
        grad_norm = float(np.linalg.norm(skew_direction(x, g)))
        if t == 1:
            records.append(IterationRecord(iteration=0, objective=f, grad_norm=grad_norm, step_size=0.0))
        if grad_norm <= cfg.g_tol:
            converged, stop_reason = True, "stationary"
            break

        tau = cfg.tau
        for attempt in range(cfg.max_backtracks + 1):
            candidate = _cayley_update(x, g, tau)
            f_new = float(objective(candidate))
            if not np.isfinite(f_new):
                raise ObjectiveDivergedError(t)
            if not cfg.backtracking or f_new <= f:
                break
            logger.debug(f"Iteration {t}: F rose to {f_new:.6e} at tau={tau:g}, backtracking")
            tau *= cfg.backtrack_factor
        else:
            exhausted, stop_reason = True, "backtracking_exhausted"
            logger.warning(f"Backtracking exhausted at iteration {t}; returning best iterate (F={best_f:.6e})")
            break

        x, f_prev, f = candidate, f, f_new
        records.append(IterationRecord(iteration=t, objective=f, grad_norm=grad_norm, step_size=tau))
        logger.debug(f"Iteration {t}: F={f:.10e} |A|={grad_norm:.3e} tau={tau:g}")
        if f < best_f:
            best_x, best_f = x, f
        if abs(f_prev - f) < cfg.f_tol:
            converged, stop_reason = True, "f_tol"
            break

    trace = OptTrace(
        iterations=records,
        converged=converged,
        backtracking_exhausted=exhausted,
        stop_reason=stop_reason,
    )
    logger.debug(f"Stiefel optimizer stopped ({stop_reason}) after {len(records)} records, F={best_f:.6e}")
    return OrthogonalMatrix(Q=best_x), best_f, trace
