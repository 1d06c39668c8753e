"""Transductive graph signal reconstruction.

Every method is fitted to a linear map ``x_U = beta x_M`` for one sampling
pattern; refitting is required whenever the pattern changes.
"""

import sys
from dataclasses import dataclass
from functools import cached_property

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # pragma: no cover - stdlib-equivalent fallback for Python 3.10
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from air_gsr.errors import ComputationError, ConfigError, DataError, DimensionMismatchError
from air_gsr.graph.laplacian import (
    EigenDecomposition,
    GraphSignal,
    LaplacianMatrix,
    SamplingPattern,
    block_diagonal,
    eigendecompose,
)


LAP_INT_RIDGE = 1e-8
GSP_RANK_RTOL = 1e-10


class MethodKind(StrEnum):
    LAP_INT = 'lapint'
    GSP_LOWPASS = 'gsp'
    KRR_DIFF = 'krr-diff'
    KRR_COV = 'krr-cov'


class MethodSpec(BaseModel):
    """A reconstruction method with its hyperparameters.

    Attributes:
        kind (MethodKind): Which reconstruction method.
        k (int): GSP bandwidth K.
        mu (float): KRR ridge.
        sigma2 (float): Diffusion kernel width.
    """

    model_config = ConfigDict(frozen=True)

    kind: MethodKind
    k: Optional[int] = Field(default=None, ge=1)
    mu: Optional[float] = Field(default=None, gt=0)
    sigma2: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode='after')
    def _check_required(self):
        required = {
            MethodKind.LAP_INT: (),
            MethodKind.GSP_LOWPASS: ('k',),
            MethodKind.KRR_DIFF: ('mu', 'sigma2'),
            MethodKind.KRR_COV: ('mu',),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.kind.value} requires hyperparameters {missing}')
        return self

    def hyperparameters(self) -> dict:
        return {name: getattr(self, name) for name in ('k', 'mu', 'sigma2') if getattr(self, name) is not None}


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric positive semidefinite N x N kernel."""

    k: np.ndarray

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise DimensionMismatchError(f'Kernel must be square, got shape {k.shape}')
        if np.abs(k - k.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(k).max(initial=0.0)):
            raise DataError('Kernel matrix is not symmetric')
        k = (k + k.T) / 2.0
        k.setflags(write=False)
        object.__setattr__(self, 'k', k)

    @property
    def n(self) -> int:
        return self.k.shape[0]


@dataclass(frozen=True)
class LinearReconstructor:
    """Fitted ``x_U = beta x_M`` for one sampling pattern.

    Attributes:
        beta (np.ndarray): |U| x |M| coefficients.
        pattern (SamplingPattern): Observed/unobserved split the fit belongs to.
        method (MethodSpec): Method and hyperparameters used.
        flags (tuple[str, ...]): Degradations met while fitting
            (``'regularized'``, ``'rank-deficient'``).
    """

    beta: np.ndarray
    pattern: SamplingPattern
    method: MethodSpec
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(len(self.pattern.unobserved), len(self.pattern.observed))
        if not np.all(np.isfinite(beta)):
            raise ComputationError('Reconstruction coefficients are not finite')
        beta.setflags(write=False)
        object.__setattr__(self, 'beta', beta)


@dataclass(frozen=True)
class GraphModel:
    """Everything a reconstruction method may need from a learned graph.

    The eigendecomposition and kernels are computed once on first use and then
    shared read-only.

    Attributes:
        laplacian (LaplacianMatrix): Learned Laplacian (Lap.Int, GSP, KRR-DIFF).
        covariance (KernelMatrix): Estimated covariance (KRR-COV).
        blocks (tuple[GraphModel, ...]): Per-cluster models when this model is a
            block-diagonal assembly; GSP is then fitted block by block.
        members (tuple[tuple[int, ...], ...]): Node indices of each block.
    """

    laplacian: Optional[LaplacianMatrix] = None
    covariance: Optional[KernelMatrix] = None
    blocks: Tuple['GraphModel', ...] = ()
    members: Tuple[Tuple[int, ...], ...] = ()

    @cached_property
    def eig(self) -> EigenDecomposition:
        if self.laplacian is None:
            raise ConfigError('This method needs a learned Laplacian')
        return eigendecompose(self.laplacian)

    def diffusion(self, sigma2: float) -> KernelMatrix:
        cache = self.__dict__.setdefault('_diffusion_cache', {})
        if sigma2 not in cache:
            cache[sigma2] = diffusion_kernel(self.eig, sigma2)
        return cache[sigma2]

    @property
    def n(self) -> int:
        source = self.laplacian if self.laplacian is not None else self.covariance
        return source.n

    @classmethod
    def from_blocks(cls, models: Sequence['GraphModel'], members: Sequence[Sequence[int]], n: int) -> 'GraphModel':
        """Assemble per-cluster models into one block-diagonal model."""
        members = tuple(tuple(int(i) for i in idx) for idx in members)
        laplacian = covariance = None
        if all(m.laplacian is not None for m in models):
            laplacian = LaplacianMatrix(block_diagonal([m.laplacian.l for m in models], members, n))
        if all(m.covariance is not None for m in models):
            covariance = KernelMatrix(block_diagonal([m.covariance.k for m in models], members, n))
        return cls(laplacian, covariance, tuple(models), members)


def fit_lap_int(l: LaplacianMatrix, p: SamplingPattern) -> LinearReconstructor:  # noqa: E741
    """Laplacian interpolation: ``beta = -L_UU^{-1} L_UM``.

    A singular ``L_UU`` (an unobserved component cut off from M) gets a
    ``1e-8 I`` ridge and the ``'regularized'`` flag.
    """
    method = MethodSpec(kind=MethodKind.LAP_INT)
    m, u = p.m_idx, p.u_idx
    if u.size == 0:
        return LinearReconstructor(np.zeros((0, m.size)), p, method)

    l_uu = l.l[np.ix_(u, u)]
    l_um = l.l[np.ix_(u, m)]
    flags = ()
    factor = _cholesky(l_uu)
    if factor is None:
        logger.warning(f'L_UU is singular for unobserved nodes {list(p.unobserved)}; adding a {LAP_INT_RIDGE} ridge')
        flags = ('regularized',)
        factor = _cholesky(l_uu + LAP_INT_RIDGE * np.eye(u.size), strict=False)
        if factor is None:
            raise ComputationError(f'L_UU stays singular after regularization for nodes {list(p.unobserved)}')

    beta = -scipy.linalg.cho_solve(factor, l_um)
    return LinearReconstructor(beta, p, method, flags)


def _cholesky(a, strict: bool = True):
    """Cholesky factor, or None when ``a`` is not (numerically) positive definite."""
    try:
        factor = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError:
        return None
    if strict:
        pivots = np.diag(factor[0]) ** 2
        if pivots.min() <= 1e-12 * max(1.0, np.abs(np.diag(a)).max()):
            return None
    return factor


def fit_gsp(eig: EigenDecomposition, p: SamplingPattern, k: int) -> LinearReconstructor:
    """Low-pass GSP: ``beta = U_UK pinv(U_MK)``.

    Least-squares recovery of the K-sparse GDFT coefficients from the observed
    rows, followed by the inverse GDFT on the unobserved rows.
    """
    method = MethodSpec(kind=MethodKind.GSP_LOWPASS, k=k)
    m, u = p.m_idx, p.u_idx
    if k > m.size:
        raise ComputationError(f'Bandwidth K={k} exceeds the {m.size} observed nodes')

    u_mk = eig.eigenvectors[np.ix_(m, np.arange(k))]
    u_uk = eig.eigenvectors[np.ix_(u, np.arange(k))]
    singular = scipy.linalg.svdvals(u_mk)
    rank = int(np.sum(singular > GSP_RANK_RTOL * singular.max())) if singular.size else 0
    flags = ()
    if rank < k:
        logger.warning(f'U_MK has rank {rank} < K={k}; using a truncated pseudoinverse')
        flags = ('rank-deficient',)

    pinv = scipy.linalg.pinv(u_mk, atol=0.0, rtol=GSP_RANK_RTOL)
    return LinearReconstructor(u_uk @ pinv, p, method, flags)


def diffusion_kernel(eig: EigenDecomposition, sigma2: float) -> KernelMatrix:
    """``K = U diag(exp(-sigma2 lambda / 2)) U^T``; exactly I when ``sigma2 == 0``."""
    if sigma2 < 0:
        raise ConfigError(f'sigma2 must be nonnegative, got {sigma2}')
    if sigma2 == 0:
        return KernelMatrix(np.eye(eig.n))

    u = eig.eigenvectors
    k = (u * np.exp(-sigma2 * eig.eigenvalues / 2.0)) @ u.T
    return KernelMatrix((k + k.T) / 2.0)


def fit_krr(kernel: KernelMatrix, p: SamplingPattern, mu: float,
            kind: MethodKind = MethodKind.KRR_DIFF, sigma2: float = None) -> LinearReconstructor:
    """Kernel ridge regression: ``beta = K_UM (K_MM + mu |M| I)^{-1}``.

    The ridge is scaled by the number of observed nodes.
    """
    if not mu > 0:
        raise ConfigError(f'mu must be positive, got {mu}')
    if kind == MethodKind.KRR_DIFF and sigma2 is None:
        sigma2 = 0.0
    method = MethodSpec(kind=kind, mu=mu, sigma2=sigma2 if kind == MethodKind.KRR_DIFF else None)
    m, u = p.m_idx, p.u_idx
    a = kernel.k[np.ix_(m, m)] + mu * m.size * np.eye(m.size)
    try:
        factor = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError as e:
        raise ComputationError(f'K_MM + mu |M| I is not positive definite: {e}') from e

    beta = scipy.linalg.cho_solve(factor, kernel.k[np.ix_(m, u)]).T
    return LinearReconstructor(beta, p, method)


def reconstruct(r: LinearReconstructor, x_m) -> np.ndarray:
    """``x_U = beta x_M``. Accepts a single vector or a T x |M| batch."""
    x_m = np.asarray(x_m, dtype=float)
    if x_m.shape[-1] != r.beta.shape[1]:
        raise DimensionMismatchError(f'Expected {r.beta.shape[1]} observed values, got {x_m.shape[-1]}')
    return x_m @ r.beta.T


def fit_method(method: MethodSpec, model: GraphModel, p: SamplingPattern) -> LinearReconstructor:
    """Fit ``method`` on ``model`` for sampling pattern ``p``."""
    if method.kind == MethodKind.LAP_INT:
        return fit_lap_int(_require_laplacian(model), p)
    if method.kind == MethodKind.GSP_LOWPASS:
        if model.blocks:
            return _fit_gsp_blockwise(method, model, p)
        _require_laplacian(model)
        return fit_gsp(model.eig, p, method.k)
    if method.kind == MethodKind.KRR_DIFF:
        _require_laplacian(model)
        return fit_krr(model.diffusion(method.sigma2), p, method.mu, MethodKind.KRR_DIFF, method.sigma2)
    if model.covariance is None:
        raise ConfigError('KRR-COV needs an estimated covariance')
    return fit_krr(model.covariance, p, method.mu, MethodKind.KRR_COV)


def _require_laplacian(model: GraphModel) -> LaplacianMatrix:
    if model.laplacian is None:
        raise ConfigError('This method needs a learned Laplacian')
    return model.laplacian


def _fit_gsp_blockwise(method, model, p) -> LinearReconstructor:
    """GSP on a block-diagonal model, bandwidth K applied inside each block."""
    observed = set(p.observed)
    beta = np.zeros((len(p.unobserved), len(p.observed)))
    row_of = {node: i for i, node in enumerate(p.unobserved)}
    col_of = {node: i for i, node in enumerate(p.observed)}
    flags = set()
    for block, idx in zip(model.blocks, model.members):
        local_mask = np.array([node in observed for node in idx])
        if local_mask.all():
            continue
        if not local_mask.any():
            raise ComputationError(f'Block {list(idx)} has no observed node')
        sub = fit_method(method, block, SamplingPattern.from_mask(local_mask))
        rows = [row_of[idx[i]] for i in sub.pattern.unobserved]
        cols = [col_of[idx[i]] for i in sub.pattern.observed]
        beta[np.ix_(rows, cols)] = sub.beta
        flags.update(sub.flags)
    return LinearReconstructor(beta, p, method, tuple(sorted(flags)))


def reconstruct_signal(method: MethodSpec, model: GraphModel, signal: GraphSignal) -> np.ndarray:
    """Complete a graph signal: fit on its mask, then fill the unobserved nodes.

    Observed entries are returned unchanged; unobserved entries are never read.
    """
    if signal.n != model.n:
        raise DimensionMismatchError(f'Signal has {signal.n} nodes, graph has {model.n}')
    if not signal.mask.any():
        raise DataError('All nodes are missing; nothing to reconstruct from')

    out = np.array(signal.values)
    if signal.mask.all():
        return out

    pattern = SamplingPattern.from_mask(signal.mask)
    r = fit_method(method, model, pattern)
    out[pattern.u_idx] = reconstruct(r, signal.values[pattern.m_idx])
    return out
