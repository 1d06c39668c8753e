"""Empirical covariance and graphical lasso for the vertex-covariance kernel."""

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from air_gsr.errors import ComputationError, ConfigError, DataError, DimensionMismatchError
from air_gsr.graph.laplacian import DEFAULT_EDGE_TAU, WeightMatrix


class GlassoConfig(BaseModel):
    """Graphical lasso solver settings.

    Attributes:
        tol (float): Duality-gap / relative-change tolerance.
        max_iters (int): Maximum number of column sweeps.
        inner_tol (float): Tolerance of each lasso subproblem.
        inner_max_iters (int): Coordinate-descent passes per lasso subproblem.
    """

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-6, gt=0)
    max_iters: int = Field(default=500, ge=1)
    inner_tol: float = Field(default=1e-10, gt=0)
    inner_max_iters: int = Field(default=1000, ge=1)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Regularized covariance and its sparse precision.

    Attributes:
        sigma (np.ndarray): Regularized covariance, used as the KRR-COV kernel.
        theta (np.ndarray): Precision matrix.
        lam (float): The l1 penalty.
        converged (bool): The solver met its tolerance.
        objective_trace (list[float]): Negative log-determinant of the working
            covariance after every sweep (the dual objective, nonincreasing).
    """

    sigma: np.ndarray
    theta: np.ndarray
    lam: float
    converged: bool
    objective_trace: List[float] = field(default_factory=list)


def empirical_covariance(x) -> np.ndarray:
    """Sample covariance of the columns of a complete P x N matrix (1/(P-1))."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatchError(f'Expected a P x N matrix, got shape {x.shape}')
    if x.shape[0] < 2:
        raise DataError(f'Covariance needs at least 2 samples, got {x.shape[0]}')
    if np.isnan(x).any():
        raise DataError('Covariance needs complete data; found NaN entries')

    s = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return (s + s.T) / 2.0


def _lasso_cd(gram, target, lam, coef, tol, max_iters):
    """Coordinate descent for ``min 0.5 b^T G b - t^T b + lam ||b||_1``."""
    for _ in range(max_iters):
        max_change = 0.0
        for k in range(coef.size):
            old = coef[k]
            r = target[k] - gram[k] @ coef + gram[k, k] * old
            new = np.sign(r) * max(abs(r) - lam, 0.0) / gram[k, k]
            if new != old:
                coef[k] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            break
    return coef


def _dual_gap(s, theta, lam):
    return float(np.sum(s * theta) - theta.shape[0] + lam * np.abs(theta).sum())


def graphical_lasso(s, lam: float, tol: float = None, max_iters: int = None,
                    cfg: GlassoConfig = None) -> CovarianceEstimate:
    """Sparse precision estimate by block coordinate descent over columns.

    Maximizes ``log det(Theta) - tr(S Theta) - lam ||Theta||_1``. The working
    covariance W keeps ``diag(W) = diag(S) + lam``; each column update solves a
    lasso subproblem, so a diagonal S yields ``Theta_ii = 1 / (S_ii + lam)``.

    Non-convergence is reported through ``converged=False``, never raised.
    """
    cfg = cfg or GlassoConfig()
    tol = cfg.tol if tol is None else tol
    max_iters = cfg.max_iters if max_iters is None else max_iters
    if lam < 0:
        raise ConfigError(f'Graphical lasso penalty must be nonnegative, got {lam}')
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError(f'Covariance must be square, got shape {s.shape}')
    if np.abs(s - s.T).max(initial=0.0) > 1e-8 * max(1.0, np.abs(s).max(initial=0.0)):
        raise DataError('Covariance is not symmetric')
    s = (s + s.T) / 2.0
    n = s.shape[0]

    w = s + lam * np.eye(n)
    try:
        chol = scipy.linalg.cho_factor(w)
    except np.linalg.LinAlgError as e:
        raise ComputationError(f'S + lambda I is not positive definite: {e}') from e

    if lam == 0 or n == 1:
        theta = scipy.linalg.cho_solve(chol, np.eye(n))
        theta = (theta + theta.T) / 2.0
        return CovarianceEstimate(w, theta, lam, True, [-_logdet(w)])

    coefs = np.zeros((n - 1, n))
    trace = [-_logdet(w)]
    converged = False
    theta = np.linalg.inv(w)
    for sweep in range(max_iters):
        w_old = w.copy()
        for j in range(n):
            rest = np.arange(n) != j
            w11 = w[np.ix_(rest, rest)]
            coef = _lasso_cd(w11, s[rest, j], lam, coefs[:, j], cfg.inner_tol, cfg.inner_max_iters)
            coefs[:, j] = coef
            w12 = w11 @ coef
            w[rest, j] = w12
            w[j, rest] = w12
        theta = _precision_from(w, coefs)
        trace.append(-_logdet(w))
        gap = _dual_gap(s, theta, lam)
        change = np.abs(w - w_old).max() / max(np.abs(w_old).max(), np.finfo(float).tiny)
        logger.debug(f'graphical_lasso sweep {sweep}: dual gap {gap:.3e}, change {change:.3e}')
        if abs(gap) < tol or change < tol:
            converged = True
            break

    if not converged:
        logger.warning(f'graphical_lasso did not converge in {max_iters} sweeps (lambda={lam})')

    w = (w + w.T) / 2.0
    return CovarianceEstimate(w, theta, lam, converged, trace)


def _logdet(a) -> float:
    sign, value = np.linalg.slogdet(a)
    return float(value) if sign > 0 else float('-inf')


def _precision_from(w, coefs) -> np.ndarray:
    n = w.shape[0]
    theta = np.zeros((n, n))
    for j in range(n):
        rest = np.arange(n) != j
        coef = coefs[:, j]
        theta[j, j] = 1.0 / (w[j, j] - w[rest, j] @ coef)
        theta[rest, j] = -theta[j, j] * coef
    return (theta + theta.T) / 2.0


def precision_to_adjacency(theta, tau: float = DEFAULT_EDGE_TAU) -> WeightMatrix:
    """Edges where ``|theta_ij| > tau`` weighted by ``|theta_ij|``; zero diagonal."""
    if tau < 0:
        raise ValueError('tau must be nonnegative')
    a = np.abs(np.asarray(theta, dtype=float))
    a = np.where(a > tau, a, 0.0)
    np.fill_diagonal(a, 0.0)
    return WeightMatrix(a)
