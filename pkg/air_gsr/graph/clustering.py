"""Node clustering and cluster-wise graph learning / reconstruction."""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from scipy.cluster.hierarchy import cut_tree, linkage
from sklearn.metrics import calinski_harabasz_score, silhouette_score

from air_gsr.data import StandardizationParams, standardize, unstandardize
from air_gsr.errors import AirGsrError, ClusterUnobservedError, ComputationError, ConfigError, DataError
from air_gsr.graph.laplacian import GraphSignal, LaplacianMatrix, block_diagonal
from air_gsr.graph.learning import GraphLearnResult, SmoothLearnConfig, learn_graph
from air_gsr.reconstruction import GraphModel, MethodSpec, reconstruct_signal


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the nodes into C nonempty clusters.

    Labels are canonical: cluster ids follow the order of each cluster's
    smallest node index.
    """

    labels: Tuple[int, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise DataError('Cluster labels must be a nonempty vector')
        _, first = np.unique(labels, return_index=True)
        order = {int(labels[i]): new for new, i in enumerate(sorted(first))}
        object.__setattr__(self, 'labels', tuple(order[int(v)] for v in labels))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def c(self) -> int:
        return max(self.labels) + 1

    @property
    def member_lists(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(i for i, v in enumerate(self.labels) if v == k) for k in range(self.c))

    @classmethod
    def from_members(cls, member_lists: Sequence[Sequence[int]]) -> 'ClusterAssignment':
        if len(member_lists) == 0 or any(len(m) == 0 for m in member_lists):
            raise DataError('Member lists must partition the node range into nonempty clusters')
        n = sum(len(m) for m in member_lists)
        labels = np.full(n, -1)
        try:
            for k, members in enumerate(member_lists):
                labels[list(members)] = k
        except IndexError as e:
            raise DataError(f'Member lists must partition the node range: {e}') from e
        if (labels < 0).any():
            raise DataError('Member lists must partition the node range into nonempty clusters')
        return cls(tuple(labels))

    @classmethod
    def single(cls, n: int) -> 'ClusterAssignment':
        return cls(tuple([0] * n))

    def to_dict(self) -> dict:
        return {'c': self.c, 'labels': list(self.labels)}

    @classmethod
    def from_dict(cls, payload: dict) -> 'ClusterAssignment':
        try:
            assignment = cls(tuple(int(v) for v in payload['labels']))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f'Malformed cluster document: {e}') from e
        if 'c' in payload and int(payload['c']) != assignment.c:
            raise DataError(f"Cluster document declares c={payload['c']} but labels form {assignment.c} clusters")
        return assignment


class ClusterScore(NamedTuple):
    c: int
    score: float
    degenerate: bool


def _points(x) -> np.ndarray:
    x = np.asarray(getattr(x, 'values', x), dtype=float)
    if x.ndim != 2 or np.isnan(x).any():
        raise DataError('Clustering needs a complete P x N matrix')
    return x.T


def hierarchical_cluster(x, c: int) -> ClusterAssignment:
    """Ward agglomeration of the N node time series (points in R^P)."""
    points = _points(x)
    n = points.shape[0]
    if not 1 <= c <= n:
        raise ConfigError(f'Cluster count must be in [1, {n}], got {c}')
    if c == 1:
        return ClusterAssignment.single(n)
    if c == n:
        return ClusterAssignment(tuple(range(n)))

    tree = linkage(points, method='ward', metric='euclidean')
    labels = cut_tree(tree, n_clusters=c).ravel()
    return ClusterAssignment(tuple(int(v) for v in labels))


def score_cluster_count(x, c_range: Sequence[int], metric: str = 'calinski_harabasz') -> List[ClusterScore]:
    """Score each candidate cluster count; the caller picks the argmax.

    Identical points give a zero within-cluster dispersion; that case is
    reported as ``+inf`` with ``degenerate=True``.
    """
    points = _points(x)
    n = points.shape[0]
    c_range = list(c_range)
    if not c_range or any(not 2 <= c <= n - 1 for c in c_range):
        raise ConfigError(f'Every candidate cluster count must lie in [2, {n - 1}], got {c_range}')
    scorer = {'calinski_harabasz': calinski_harabasz_score, 'silhouette': silhouette_score}.get(metric)
    if scorer is None:
        raise ConfigError(f'Unknown cluster score "{metric}"')

    scores = []
    for c in c_range:
        labels = np.asarray(hierarchical_cluster(points.T, c).labels)
        within = sum(((points[labels == k] - points[labels == k].mean(axis=0)) ** 2).sum() for k in range(c))
        if within == 0:
            logger.warning(f'Zero within-cluster dispersion at c={c}')
            scores.append(ClusterScore(c, float('inf'), True))
        else:
            scores.append(ClusterScore(c, float(scorer(points, labels)), False))
    return scores


def choose_cluster_count(x, c_range: Sequence[int], metric: str = 'calinski_harabasz') -> int:
    scores = score_cluster_count(x, c_range, metric)
    best = max(scores, key=lambda s: (s.score, -s.c))
    logger.info(f'Selected c={best.c} by {metric} ({best.score:.4g})')
    return best.c


def problem_size_reduction(assignment: ClusterAssignment) -> float:
    """``1 - largest cluster size / N``."""
    return 1.0 - max(len(m) for m in assignment.member_lists) / assignment.n


@dataclass(frozen=True)
class ClusterwiseGraph:
    """Per-cluster learning results and the assembled block-diagonal Laplacian.

    Attributes:
        results (list[GraphLearnResult | None]): One per cluster; None for singletons.
        laplacian (LaplacianMatrix): Block-diagonal Laplacian in original node order.
        assignment (ClusterAssignment): The partition used.
        singletons (tuple[int, ...]): Clusters of a single node (zero 1 x 1 block).
    """

    results: List[Optional[GraphLearnResult]]
    laplacian: LaplacianMatrix
    assignment: ClusterAssignment
    singletons: Tuple[int, ...] = ()

    def block(self, k: int) -> LaplacianMatrix:
        idx = np.asarray(self.assignment.member_lists[k])
        return LaplacianMatrix(self.laplacian.l[np.ix_(idx, idx)])


def clusterwise_learn(x, assignment: ClusterAssignment,
                      configs: Union[SmoothLearnConfig, Sequence[SmoothLearnConfig]],
                      workers: int = 1) -> ClusterwiseGraph:
    """Learn one Laplacian per cluster and join them block-diagonally."""
    x = np.asarray(getattr(x, 'values', x), dtype=float)
    if x.shape[1] != assignment.n:
        raise DataError(f'Data has {x.shape[1]} nodes, assignment has {assignment.n}')
    members = assignment.member_lists
    if isinstance(configs, SmoothLearnConfig):
        configs = [configs] * assignment.c
    if len(configs) != assignment.c:
        raise ConfigError(f'Expected {assignment.c} learning configs, got {len(configs)}')

    def learn(k):
        idx = np.asarray(members[k])
        if idx.size == 1:
            return None
        try:
            return learn_graph(x[:, idx], configs[k])
        except AirGsrError as e:
            raise type(e)(f'cluster {k}: {e}') from e

    results = Parallel(n_jobs=workers, prefer='threads')(delayed(learn)(k) for k in range(assignment.c))

    singletons = tuple(k for k, r in enumerate(results) if r is None)
    if singletons:
        logger.warning(f'Singleton clusters {list(singletons)} get an empty graph; their nodes cannot be reconstructed')
    blocks = [r.laplacian.l if r is not None else np.zeros((1, 1)) for r in results]
    laplacian = LaplacianMatrix(block_diagonal(blocks, members, assignment.n))
    return ClusterwiseGraph(results, laplacian, assignment, singletons)


def clusterwise_reconstruct(models: Sequence[GraphModel], assignment: ClusterAssignment, method: MethodSpec,
                            signal: GraphSignal, params: StandardizationParams) -> np.ndarray:
    """Complete one new sample cluster by cluster.

    The sample is standardized, each cluster's unobserved nodes are reconstructed
    from that cluster's observed nodes only, and the result is unstandardized.
    Observed entries come back unchanged.
    """
    if signal.n != assignment.n or params.n != assignment.n:
        raise DataError(f'Signal ({signal.n}), assignment ({assignment.n}) and standardization '
                        f'({params.n}) node counts differ')
    if len(models) != assignment.c:
        raise ConfigError(f'Expected {assignment.c} cluster models, got {len(models)}')

    out = np.array(signal.values)
    if signal.mask.all():
        return out
    z = np.where(signal.mask, standardize(np.where(signal.mask, signal.values, 0.0), params), 0.0)
    for k, idx in enumerate(assignment.member_lists):
        idx = np.asarray(idx)
        local_mask = signal.mask[idx]
        if local_mask.all():
            continue
        if not local_mask.any():
            raise ClusterUnobservedError(k, idx[~local_mask].tolist())
        try:
            filled = reconstruct_signal(method, models[k], GraphSignal(z[idx], local_mask))
        except ComputationError as e:
            raise ComputationError(f'cluster {k}: {e}') from e
        missing = idx[~local_mask]
        out[missing] = unstandardize(filled, params.subset(idx))[~local_mask]
    return out
