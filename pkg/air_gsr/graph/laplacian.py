"""Weight matrices, combinatorial Laplacians and their spectra."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg
from loguru import logger

from air_gsr.errors import ComputationError, DataError, DimensionMismatchError


SYMMETRY_TOL = 1e-10
ROW_SUM_TOL = 1e-8
DEFAULT_EDGE_TAU = 1e-4


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric nonnegative weights with zero diagonal.

    The matrix is stored canonically from its upper triangle, so ``w[i, j]`` and
    ``w[j, i]`` are always bit-identical.

    Attributes:
        w (np.ndarray): N x N weights.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatchError(f'Weight matrix must be square, got shape {w.shape}')
        upper = np.triu(w, k=1)
        if np.any(upper < 0):
            raise DataError('Weight matrix has negative entries')
        object.__setattr__(self, 'w', _frozen(upper + upper.T))

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class LaplacianMatrix:
    """Combinatorial Laplacian ``L = D - W``.

    Attributes:
        l (np.ndarray): N x N symmetric matrix with zero row sums and
            nonpositive off-diagonal entries.
    """

    l: np.ndarray  # noqa: E741

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)  # noqa: E741
        if l.ndim != 2 or l.shape[0] != l.shape[1]:
            raise DimensionMismatchError(f'Laplacian must be square, got shape {l.shape}')
        scale = max(1.0, float(np.abs(l).max(initial=0.0)))
        if np.abs(l - l.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise DataError('Laplacian is not symmetric')
        off = l - np.diag(np.diag(l))
        if off.max(initial=0.0) > SYMMETRY_TOL * scale:
            raise DataError('Laplacian has positive off-diagonal entries')
        if np.abs(l.sum(axis=1)).max(initial=0.0) > ROW_SUM_TOL * scale:
            raise DataError('Laplacian rows do not sum to zero')
        if np.diag(l).min(initial=0.0) < -SYMMETRY_TOL * scale:
            raise DataError('Laplacian has negative diagonal entries')
        object.__setattr__(self, 'l', _frozen(l))

    @property
    def n(self) -> int:
        return self.l.shape[0]

    def weights(self) -> WeightMatrix:
        """Recover ``W = D - L`` (off-diagonal part, sign flipped)."""
        w = -self.l.copy()
        np.fill_diagonal(w, 0.0)
        return WeightMatrix(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues of a Laplacian with paired orthonormal eigenvectors.

    Attributes:
        eigenvalues (np.ndarray): length-N, nondecreasing.
        eigenvectors (np.ndarray): N x N matrix ``U``; column i pairs with eigenvalue i.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'eigenvalues', _frozen(self.eigenvalues))
        object.__setattr__(self, 'eigenvectors', _frozen(self.eigenvectors))

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def recompose(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


@dataclass(frozen=True)
class SamplingPattern:
    """Split of the node set into observed (M) and unobserved (U) indices."""

    observed: Tuple[int, ...]
    unobserved: Tuple[int, ...]

    def __post_init__(self):
        observed = tuple(sorted(int(i) for i in self.observed))
        unobserved = tuple(sorted(int(i) for i in self.unobserved))
        if not observed:
            raise DataError('Sampling pattern needs at least one observed node')
        if set(observed) & set(unobserved):
            raise DataError('Observed and unobserved sets overlap')
        if sorted(observed + unobserved) != list(range(len(observed) + len(unobserved))):
            raise DataError('Observed and unobserved sets do not partition the node range')
        object.__setattr__(self, 'observed', observed)
        object.__setattr__(self, 'unobserved', unobserved)

    @classmethod
    def from_mask(cls, mask) -> 'SamplingPattern':
        mask = np.asarray(mask, dtype=bool)
        return cls(tuple(np.flatnonzero(mask)), tuple(np.flatnonzero(~mask)))

    @property
    def n(self) -> int:
        return len(self.observed) + len(self.unobserved)

    @property
    def m_idx(self) -> np.ndarray:
        return np.asarray(self.observed, dtype=int)

    @property
    def u_idx(self) -> np.ndarray:
        return np.asarray(self.unobserved, dtype=int)

    def sampling_matrix(self) -> np.ndarray:
        """The |M| x N 0/1 selection matrix Phi."""
        phi = np.zeros((len(self.observed), self.n))
        phi[np.arange(len(self.observed)), self.m_idx] = 1.0
        return phi


@dataclass(frozen=True)
class GraphSignal:
    """Values on every vertex at one instant; ``mask`` is True where observed."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.ones(values.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if values.ndim != 1 or values.shape != mask.shape:
            raise DimensionMismatchError(f'Signal values {values.shape} and mask {mask.shape} disagree')
        values = values.copy()
        values.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'mask', mask)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def laplacian_from_weights(w: WeightMatrix) -> LaplacianMatrix:
    """Build ``L = D - W`` with ``D[i, i] = sum_j w[i, j]``."""
    return LaplacianMatrix(np.diag(w.w.sum(axis=1)) - w.w)


def eigendecompose(l: LaplacianMatrix) -> EigenDecomposition:  # noqa: E741
    """Symmetric eigendecomposition ``L = U diag(lambda) U^T``.

    Each eigenvector's first nonnegligible component is made positive, so the
    GDFT coefficients are reproducible across platforms.
    """
    try:
        eigenvalues, u = scipy.linalg.eigh(l.l)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ComputationError(f'Eigendecomposition failed: {e}') from e

    u = np.array(u)
    for col in range(u.shape[1]):
        nz = np.flatnonzero(np.abs(u[:, col]) > 1e-12)
        if nz.size and u[nz[0], col] < 0:
            u[:, col] = -u[:, col]

    return EigenDecomposition(eigenvalues, u)


def smoothness(l: LaplacianMatrix, x) -> float:  # noqa: E741
    """Quadratic form ``x^T L x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (l.n,):
        raise DimensionMismatchError(f'Signal of shape {x.shape} on a {l.n}-node graph')
    return float(x @ l.l @ x)


def edge_set(w: WeightMatrix, tau: float = DEFAULT_EDGE_TAU) -> List[Tuple[int, int, float]]:
    """Upper-triangle pairs ``(i, j, w_ij)`` with ``w_ij > tau``."""
    if tau < 0:
        raise ValueError('tau must be nonnegative')
    iu, ju = np.triu_indices(w.n, k=1)
    keep = w.w[iu, ju] > tau
    return [(int(i), int(j), float(v)) for i, j, v in zip(iu[keep], ju[keep], w.w[iu, ju][keep])]


def block_diagonal(blocks: Sequence[np.ndarray], members: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Place square ``blocks`` at the rows/columns listed in ``members``."""
    out = np.zeros((n, n))
    for block, idx in zip(blocks, members):
        idx = np.asarray(idx, dtype=int)
        out[np.ix_(idx, idx)] = block
    return out


def graph_to_dict(w: WeightMatrix, nodes: Sequence[str] = None) -> dict:
    """Serializable form ``{"n", "nodes", "edges"}``; every nonzero weight is kept."""
    nodes = list(nodes) if nodes is not None else [str(i) for i in range(w.n)]
    return {
        'n': w.n,
        'nodes': nodes,
        'edges': [{'i': i, 'j': j, 'w': v} for i, j, v in edge_set(w, tau=0.0)],
    }


def graph_from_dict(payload: dict) -> Tuple[LaplacianMatrix, List[str]]:
    try:
        n = int(payload['n'])
        nodes = [str(v) for v in payload.get('nodes', range(n))]
        w = np.zeros((n, n))
        for edge in payload['edges']:
            i, j = int(edge['i']), int(edge['j'])
            w[min(i, j), max(i, j)] = float(edge['w'])
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise DataError(f'Malformed graph document: {e}') from e
    if len(nodes) != n:
        raise DataError(f'Graph document lists {len(nodes)} nodes but n={n}')

    return laplacian_from_weights(WeightMatrix(w)), nodes


def save_graph(path, l: LaplacianMatrix, nodes: Sequence[str] = None):  # noqa: E741
    """Write a graph as JSON; floats keep full round-trip precision."""
    path = Path(path)
    path.write_text(json.dumps(graph_to_dict(l.weights(), nodes), indent=2), encoding='utf-8')
    logger.debug(f'Graph written to {path}')


def load_graph(path) -> Tuple[LaplacianMatrix, List[str]]:
    """Read a graph written by :func:`save_graph` and rebuild its Laplacian."""
    with open(path, 'r', encoding='utf-8') as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f'Invalid graph JSON {path}: {e}') from e

    return graph_from_dict(payload)
