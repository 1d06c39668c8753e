"""Smoothness-based Laplacian learning by alternating minimization.

Solves

    min_{L, Y}  ||X - Y||_F^2 + alpha * tr(Y L Y^T) + beta * ||L||_F^2
    s.t.        tr(L) = N,  L_ij = L_ji <= 0 (i != j),  L 1 = 0

where X is P x N (rows are time instants, columns are nodes). With L fixed the
Y-block has a closed form; with Y fixed the L-block is a convex QP over the
upper-triangle edge weights.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from air_gsr.errors import ComputationError, ConfigError, DataError, DimensionMismatchError
from air_gsr.graph.laplacian import LaplacianMatrix, WeightMatrix, laplacian_from_weights
from air_gsr.utils.simplex import project_simplex


class SmoothLearnConfig(BaseModel):
    """Graph learning configuration.

    Attributes:
        alpha (float): Smoothness weight.
        beta (float): Frobenius (density) weight.
        max_outer_iters (int): Maximum number of (L-step, Y-step) alternations.
        rel_tol (float): Stop when the relative objective change falls below this.
        qp_max_iters (int): Maximum projected-gradient iterations per L-step.
        qp_tol (float): Projected-gradient norm at which an L-step stops.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    max_outer_iters: int = Field(default=50, ge=1)
    rel_tol: float = Field(default=1e-4, gt=0)
    qp_max_iters: int = Field(default=2000, ge=1)
    qp_tol: float = Field(default=1e-8, gt=0)


@dataclass(frozen=True)
class GraphLearnResult:
    """Outcome of :func:`learn_graph`.

    Attributes:
        laplacian (LaplacianMatrix): Learned Laplacian, ``tr(L) = N``.
        filtered (np.ndarray): The smoothed signals Y, P x N.
        objective_trace (list[float]): Objective after every (L-step, Y-step) pair.
        converged (bool): Both the alternation and every QP met their tolerance.
    """

    laplacian: LaplacianMatrix
    filtered: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    converged: bool = True


@dataclass(frozen=True)
class QPResult:
    weights: np.ndarray
    iterations: int
    converged: bool


def _check_hyper(alpha: float, beta: float = None):
    if not alpha > 0:
        raise ConfigError(f'alpha must be positive, got {alpha}')
    if beta is not None and not beta > 0:
        raise ConfigError(f'beta must be positive, got {beta}')


def _as_matrix(x) -> np.ndarray:
    mask = getattr(x, 'mask', None)
    values = getattr(x, 'values', x)
    values = np.asarray(values, dtype=float)
    if mask is not None and not np.all(mask):
        raise DataError('Graph learning needs complete data; drop incomplete rows first')
    if values.ndim != 2:
        raise DimensionMismatchError(f'Expected a P x N matrix, got shape {values.shape}')
    if np.isnan(values).any():
        raise DataError('Graph learning needs complete data; found NaN entries')
    return values


def _pair_distances(y: np.ndarray, iu: np.ndarray, ju: np.ndarray) -> np.ndarray:
    """Squared distances between node columns, ``z_ij = ||y_i - y_j||^2``."""
    sq = (y * y).sum(axis=0)
    gram = y.T @ y
    z = sq[iu] + sq[ju] - 2.0 * gram[iu, ju]
    return np.clip(z, 0.0, None)


def _weights_to_laplacian(weights: np.ndarray, n: int) -> LaplacianMatrix:
    w = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    w[iu, ju] = weights
    return laplacian_from_weights(WeightMatrix(w))


def _laplacian_to_weights(l: LaplacianMatrix) -> np.ndarray:  # noqa: E741
    iu, ju = np.triu_indices(l.n, k=1)
    return np.clip(-l.l[iu, ju], 0.0, None)


def y_step(x, l: LaplacianMatrix, alpha: float) -> np.ndarray:  # noqa: E741
    """Minimize ``||X - Y||_F^2 + alpha tr(Y L Y^T)`` over Y.

    Every row y of the result solves ``(I + alpha L) y = x``.
    """
    _check_hyper(alpha)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != l.n:
        raise DimensionMismatchError(f'Data of shape {x.shape} on a {l.n}-node graph')

    a = np.eye(l.n) + alpha * l.l
    try:
        factor = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError as e:
        raise ComputationError(f'I + alpha L is not positive definite: {e}') from e

    return scipy.linalg.cho_solve(factor, x.T).T


def _qp_objective(weights, z, alpha, beta, iu, ju, n):
    d = np.bincount(iu, weights, n) + np.bincount(ju, weights, n)
    return alpha * z @ weights + beta * (d @ d + 2.0 * weights @ weights)


def _solve_weight_qp(z, alpha, beta, n, w0, max_iters, tol) -> QPResult:
    """Projected gradient with backtracking on ``{w >= 0, sum(w) = N/2}``."""
    iu, ju = np.triu_indices(n, k=1)
    total = n / 2.0
    w = project_simplex(w0, total)

    def value(v):
        return _qp_objective(v, z, alpha, beta, iu, ju, n)

    def grad(v):
        d = np.bincount(iu, v, n) + np.bincount(ju, v, n)
        return alpha * z + beta * (2.0 * (d[iu] + d[ju]) + 4.0 * v)

    # Lipschitz constant of the gradient for the complete-graph operator
    step = 1.0 / (4.0 * beta * n)
    f = value(w)
    for it in range(1, max_iters + 1):
        g = grad(w)
        t = 2.0 * step
        while True:
            w_new = project_simplex(w - t * g, total)
            diff = w_new - w
            f_new = value(w_new)
            if f_new <= f + g @ diff + (diff @ diff) / (2.0 * t) + 1e-15 * abs(f) or t <= step:
                break
            t *= 0.5
        if f_new > f:
            # keep the iterate monotone even at the rounding level
            return QPResult(w, it, True)
        pg_norm = np.linalg.norm(diff) / t
        w, f = w_new, f_new
        if pg_norm < tol * max(1.0, np.abs(g).max()):
            return QPResult(w, it, True)

    return QPResult(w, max_iters, False)


def l_step(y, alpha: float, beta: float, cfg: SmoothLearnConfig = None,
           init: LaplacianMatrix = None) -> LaplacianMatrix:
    """Minimize ``alpha tr(Y L Y^T) + beta ||L||_F^2`` over valid Laplacians.

    Arguments:
        y: P x N filtered signals.
        alpha (float): Smoothness weight.
        beta (float): Frobenius weight.
        cfg (SmoothLearnConfig, optional): Supplies the QP iteration limit and tolerance.
        init (LaplacianMatrix, optional): Warm start; the uniform graph otherwise.
    """
    laplacian, _ = _l_step(y, alpha, beta, cfg, init)
    return laplacian


def _l_step(y, alpha, beta, cfg, init):
    _check_hyper(alpha, beta)
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] < 2:
        raise DimensionMismatchError(f'L-step needs a P x N matrix with N >= 2, got shape {y.shape}')
    n = y.shape[1]
    m = n * (n - 1) // 2
    max_iters = cfg.qp_max_iters if cfg is not None else 2000
    tol = cfg.qp_tol if cfg is not None else 1e-8

    iu, ju = np.triu_indices(n, k=1)
    z = _pair_distances(y, iu, ju)
    w0 = _laplacian_to_weights(init) if init is not None else np.full(m, n / (2.0 * m))
    if n == 2:
        # the feasible set is the single point w = 1
        return _weights_to_laplacian(np.ones(1), n), True
    result = _solve_weight_qp(z, alpha, beta, n, w0, max_iters, tol)
    if not result.converged:
        logger.debug(f'L-step QP stopped after {result.iterations} iterations without meeting qp_tol')

    return _weights_to_laplacian(result.weights, n), result.converged


def objective(x, y, l: LaplacianMatrix, alpha: float, beta: float) -> float:  # noqa: E741
    """``||X - Y||_F^2 + alpha tr(Y L Y^T) + beta ||L||_F^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != l.n:
        raise DimensionMismatchError(f'X {x.shape}, Y {y.shape} and a {l.n}-node Laplacian disagree')

    fidelity = float(((x - y) ** 2).sum())
    smooth = float(np.einsum('pi,ij,pj->', y, l.l, y))
    sparsity = float((l.l ** 2).sum())
    return fidelity + alpha * smooth + beta * sparsity


def learn_graph(x, cfg: SmoothLearnConfig) -> GraphLearnResult:
    """Learn a Laplacian from complete, standardized P x N data.

    Starts from ``Y = X`` with an L-step, then alternates Y- and L-steps until the
    relative objective change drops below ``cfg.rel_tol`` or ``cfg.max_outer_iters``
    alternations have run. Deterministic: no randomness anywhere.
    """
    _check_hyper(cfg.alpha, cfg.beta)
    x = _as_matrix(x)
    p, n = x.shape
    if p < 2 or n < 2:
        raise DataError(f'Graph learning needs P >= 2 and N >= 2, got P={p}, N={n}')
    constant = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if constant.size:
        raise DataError(f'Constant columns {constant.tolist()} carry no smoothness information')

    y = x
    laplacian = None
    trace = []
    qp_ok = True
    converged = False
    for it in range(cfg.max_outer_iters):
        laplacian, ok = _l_step(y, cfg.alpha, cfg.beta, cfg, laplacian)
        qp_ok = qp_ok and ok
        y = y_step(x, laplacian, cfg.alpha)
        trace.append(objective(x, y, laplacian, cfg.alpha, cfg.beta))
        logger.debug(f'learn_graph iteration {it}: objective {trace[-1]:.10g}')
        if len(trace) > 1:
            change = abs(trace[-2] - trace[-1]) / max(abs(trace[-2]), np.finfo(float).tiny)
            if change < cfg.rel_tol:
                converged = True
                break

    if not converged:
        logger.debug(f'learn_graph reached {cfg.max_outer_iters} iterations before rel_tol')

    y = np.array(y)
    y.setflags(write=False)
    return GraphLearnResult(laplacian, y, trace, converged and qp_ok)
