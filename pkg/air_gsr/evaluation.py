"""Metrics, cross-validated hyperparameter search and the reconstruction experiments."""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from air_gsr.data import fit_standardization, standardize
from air_gsr.errors import AirGsrError, ComputationError, ConfigError, DataError, DimensionMismatchError
from air_gsr.graph.clustering import ClusterAssignment, clusterwise_learn
from air_gsr.graph.covariance import GlassoConfig, empirical_covariance, graphical_lasso, precision_to_adjacency
from air_gsr.graph.laplacian import DEFAULT_EDGE_TAU, SamplingPattern, edge_set
from air_gsr.graph.learning import SmoothLearnConfig
from air_gsr.reconstruction import GraphModel, KernelMatrix, MethodKind, MethodSpec, fit_method, reconstruct


Z_95 = 1.959963984540054


@dataclass(frozen=True)
class MetricReport:
    """Error of a prediction in original units.

    ``r2`` is NaN when ``y_true`` is constant (undefined).
    """

    rmse: float
    mae: float
    r2: float
    n_points: int

    @property
    def r2_defined(self) -> bool:
        return not np.isnan(self.r2)

    def to_dict(self) -> dict:
        return {'rmse': self.rmse, 'mae': self.mae, 'r2': None if np.isnan(self.r2) else self.r2,
                'n_points': self.n_points}


def metrics(y_true, y_pred) -> MetricReport:
    """RMSE, MAE and ``R^2 = 1 - SSE / SST`` (SST about the mean of ``y_true``)."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatchError(f'y_true has {y_true.size} points, y_pred has {y_pred.size}')
    if y_true.size == 0:
        raise DataError('Metrics need at least one point')

    err = y_pred - y_true
    sse = float(err @ err)
    sst = float(((y_true - y_true.mean()) ** 2).sum())
    r2 = 1.0 - sse / sst if sst > 0 else float('nan')
    return MetricReport(float(np.sqrt(sse / y_true.size)), float(np.abs(err).mean()), r2, int(y_true.size))


def kfold_split(p: int, k: int, seed: int = 0, mode: str = 'shuffle') -> List[np.ndarray]:
    """Split ``range(p)`` into ``k`` disjoint folds whose sizes differ by at most one.

    ``mode='shuffle'`` permutes the rows with a seeded generator before chunking;
    ``mode='temporal'`` chunks them in time order.
    """
    if not 2 <= k <= p:
        raise ConfigError(f'Fold count must be in [2, {p}], got {k}')
    if mode == 'shuffle':
        rows = np.random.default_rng(seed).permutation(p)
    elif mode == 'temporal':
        rows = np.arange(p)
    else:
        raise ConfigError(f'Unknown fold mode "{mode}"')
    return [np.sort(chunk) for chunk in np.array_split(rows, k)]


def _logspace(lo, hi, num):
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), num)]


class HyperGrid(BaseModel):
    """Hyperparameter grid for the joint (graph, reconstruction) search.

    Attributes:
        alphas (list[float]): Graph-learning smoothness weights.
        betas (list[float]): Graph-learning Frobenius weights.
        ks (list[int] | None): GSP bandwidths; None means 1..min(N-1, 20).
        mus (list[float]): KRR ridges.
        sigma2s (list[float]): Diffusion kernel widths.
        lambdas (list[float]): Graphical lasso penalties (KRR-COV).
    """

    model_config = ConfigDict(extra='forbid')

    alphas: List[float] = Field(default_factory=lambda: _logspace(1e-2, 1e2, 8))
    betas: List[float] = Field(default_factory=lambda: _logspace(1e-2, 1e2, 8))
    ks: Optional[List[int]] = None
    mus: List[float] = Field(default_factory=lambda: _logspace(1e-4, 1.0, 6))
    sigma2s: List[float] = Field(default_factory=lambda: _logspace(1e-2, 10.0, 6))
    lambdas: List[float] = Field(default_factory=lambda: _logspace(1e-3, 1.0, 10))

    @field_validator('alphas', 'betas', 'mus', 'sigma2s', 'lambdas')
    @classmethod
    def _positive(cls, values):
        if not values or any(not v > 0 for v in values):
            raise ValueError('grid lists must be nonempty and positive')
        return values

    @field_validator('ks')
    @classmethod
    def _bandwidths(cls, values):
        if values is not None and (not values or any(v < 1 for v in values)):
            raise ValueError('bandwidths must be integers >= 1')
        return values

    def graph_cells(self, kind: MethodKind) -> List[dict]:
        if kind == MethodKind.KRR_COV:
            return [{'lambda': v} for v in self.lambdas]
        return [{'alpha': a, 'beta': b} for a, b in itertools.product(self.alphas, self.betas)]

    def method_cells(self, kind: MethodKind, n: int) -> List[MethodSpec]:
        if kind == MethodKind.LAP_INT:
            return [MethodSpec(kind=kind)]
        if kind == MethodKind.GSP_LOWPASS:
            ks = self.ks if self.ks is not None else list(range(1, max(1, min(n - 1, 20)) + 1))
            return [MethodSpec(kind=kind, k=k) for k in ks]
        if kind == MethodKind.KRR_DIFF:
            return [MethodSpec(kind=kind, mu=m, sigma2=s) for m, s in itertools.product(self.mus, self.sigma2s)]
        return [MethodSpec(kind=kind, mu=m) for m in self.mus]


@dataclass(frozen=True)
class FoldResult:
    fold: int
    rmse: float
    mae: float
    r2: float
    edges: int
    per_node: Dict[int, MetricReport]


@dataclass
class CVCell:
    """One grid cell: hyperparameters and their fold-averaged errors."""

    hyperparameters: dict
    mean_rmse: float = float('nan')
    mean_mae: float = float('nan')
    mean_r2: float = float('nan')
    mean_edges: float = float('nan')
    folds: List[FoldResult] = field(default_factory=list)
    skipped: Optional[str] = None

    def sort_key(self):
        return (self.mean_rmse, self.mean_edges, tuple(sorted(self.hyperparameters.items())))

    def per_node(self) -> Dict[int, dict]:
        """Per-node metrics averaged over folds."""
        nodes = sorted({n for f in self.folds for n in f.per_node})
        out = {}
        for n in nodes:
            reports = [f.per_node[n] for f in self.folds if n in f.per_node]
            out[n] = {
                'rmse': float(np.mean([r.rmse for r in reports])),
                'mae': float(np.mean([r.mae for r in reports])),
                'r2': _nanmean([r.r2 for r in reports]),
            }
        return out

    def to_dict(self, with_nodes: bool = False) -> dict:
        payload = {
            'hyperparameters': self.hyperparameters,
            'mean_rmse': _none_if_nan(self.mean_rmse),
            'mean_mae': _none_if_nan(self.mean_mae),
            'mean_r2': _none_if_nan(self.mean_r2),
            'mean_edges': _none_if_nan(self.mean_edges),
            'skipped': self.skipped,
            'folds': [{'fold': f.fold, 'rmse': f.rmse, 'mae': f.mae, 'r2': _none_if_nan(f.r2), 'edges': f.edges}
                      for f in self.folds],
        }
        if with_nodes:
            payload['per_node'] = {str(n): {k: _none_if_nan(v) for k, v in m.items()}
                                   for n, m in self.per_node().items()}
        return payload


@dataclass(frozen=True)
class CVResult:
    """Every grid cell of a cross-validation run and the selected one.

    ``best`` minimizes mean RMSE; ties go to fewer edges, then to the
    lexicographically smaller hyperparameters.
    """

    method: MethodKind
    cells: List[CVCell]
    best: int
    seed: int
    folds: int
    node_ids: Tuple[str, ...] = ()

    @property
    def best_cell(self) -> CVCell:
        return self.cells[self.best]

    def to_dict(self) -> dict:
        return {
            'method': self.method.value,
            'seed': self.seed,
            'folds': self.folds,
            'best': self.best,
            'node_ids': list(self.node_ids),
            'cells': [c.to_dict(with_nodes=(i == self.best)) for i, c in enumerate(self.cells)],
        }

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, c in enumerate(self.cells):
            row = dict(c.hyperparameters)
            row.update(mean_rmse=c.mean_rmse, mean_mae=c.mean_mae, mean_r2=c.mean_r2,
                       mean_edges=c.mean_edges, skipped=c.skipped or '', best=(i == self.best))
            rows.append(row)
        return pd.DataFrame(rows)


def _none_if_nan(v):
    return None if v is None or (isinstance(v, float) and np.isnan(v)) else v


def _nanmean(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.nanmean(values)) if np.isfinite(values).any() else float('nan')


def _complete_values(x) -> Tuple[np.ndarray, Tuple[str, ...]]:
    mask = getattr(x, 'mask', None)
    values = np.asarray(getattr(x, 'values', x), dtype=float)
    if (mask is not None and not np.all(mask)) or np.isnan(values).any():
        raise DataError('Cross-validation needs complete data; drop incomplete rows first')
    node_ids = tuple(getattr(x, 'node_ids', [str(i) for i in range(values.shape[1])]))
    return values, node_ids


@dataclass(frozen=True)
class FittedGraph:
    """Per-cluster reconstruction models learned on one training split."""

    models: Tuple[GraphModel, ...]
    assignment: ClusterAssignment
    edges: int
    converged: bool


def fit_graph(z_train, kind: MethodKind, graph_params: dict, assignment: ClusterAssignment = None,
              learn_options: dict = None, glasso_cfg: GlassoConfig = None,
              tau: float = DEFAULT_EDGE_TAU) -> FittedGraph:
    """Learn the graph (or glasso covariance for KRR-COV) on standardized training rows."""
    n = z_train.shape[1]
    assignment = assignment or ClusterAssignment.single(n)
    models = []
    edges = 0
    converged = True
    if kind == MethodKind.KRR_COV:
        for idx in assignment.member_lists:
            idx = np.asarray(idx)
            estimate = graphical_lasso(empirical_covariance(z_train[:, idx]), graph_params['lambda'], cfg=glasso_cfg)
            converged = converged and estimate.converged
            edges += len(edge_set(precision_to_adjacency(estimate.theta, tau), tau))
            models.append(GraphModel(covariance=KernelMatrix(estimate.sigma)))
    else:
        cfg = SmoothLearnConfig(alpha=graph_params['alpha'], beta=graph_params['beta'], **(learn_options or {}))
        learned = clusterwise_learn(z_train, assignment, cfg)
        for k in range(assignment.c):
            laplacian = learned.block(k)
            if learned.results[k] is not None:
                converged = converged and learned.results[k].converged
            edges += len(edge_set(laplacian.weights(), tau))
            models.append(GraphModel(laplacian=laplacian))
    return FittedGraph(tuple(models), assignment, edges, converged)


def _leave_one_out(fitted: FittedGraph, method: MethodSpec, z_test, x_test, params) -> Dict[int, MetricReport]:
    """Reconstruct every node of the test rows from the rest of its cluster."""
    reports = {}
    for model, idx in zip(fitted.models, fitted.assignment.member_lists):
        if len(idx) < 2:
            continue
        idx = np.asarray(idx)
        for local in range(idx.size):
            mask = np.ones(idx.size, dtype=bool)
            mask[local] = False
            r = fit_method(method, model, SamplingPattern.from_mask(mask))
            node = int(idx[local])
            pred = reconstruct(r, z_test[:, idx[mask]])[:, 0] * params.stds[node] + params.means[node]
            reports[node] = metrics(x_test[:, node], pred)
    return reports


def _fold_summary(fold: int, reports: Dict[int, MetricReport], edges: int) -> FoldResult:
    values = list(reports.values())
    return FoldResult(fold, float(np.mean([r.rmse for r in values])), float(np.mean([r.mae for r in values])),
                      _nanmean([r.r2 for r in values]), edges, reports)


def _finalize(cell: CVCell):
    if cell.skipped is None and cell.folds:
        cell.mean_rmse = float(np.mean([f.rmse for f in cell.folds]))
        cell.mean_mae = float(np.mean([f.mae for f in cell.folds]))
        cell.mean_r2 = _nanmean([f.r2 for f in cell.folds])
        cell.mean_edges = float(np.mean([f.edges for f in cell.folds]))


def _select_density(values, kind, graph_cells, target_density, assignment, learn_options, glasso_cfg, tau):
    """Greedy stage one: the graph cell whose edge density is closest to the target."""
    z = standardize(values, fit_standardization(values))
    n = values.shape[1]
    assignment = assignment or ClusterAssignment.single(n)
    possible = sum(len(m) * (len(m) - 1) // 2 for m in assignment.member_lists)
    scored = []
    for params in graph_cells:
        try:
            fitted = fit_graph(z, kind, params, assignment, learn_options, glasso_cfg, tau)
        except ComputationError as e:
            logger.warning(f'Greedy stage skipped {params}: {e}')
            continue
        density = fitted.edges / possible if possible else 0.0
        scored.append((abs(density - target_density), tuple(sorted(params.items())), params))
    if not scored:
        raise ComputationError('No graph could be learned in the greedy density search')
    best = min(scored, key=lambda s: s[:2])[2]
    logger.info(f'Greedy stage selected {best} for target density {target_density}')
    return [best]


def cross_validate(x, method: Union[MethodKind, str], grid: HyperGrid = None, k: int = 5, seed: int = 0, *,
                   fold_mode: str = 'shuffle', greedy: bool = False, target_density: float = 0.2,
                   assignment: ClusterAssignment = None, learn_options: dict = None,
                   glasso_cfg: GlassoConfig = None, tau: float = DEFAULT_EDGE_TAU, workers: int = 1) -> CVResult:
    """k-fold CV over the joint graph-learning and reconstruction grid.

    In every fold the data are standardized with training statistics, the graph is
    learned on the training rows, and each node of the test rows is reconstructed
    from all other nodes (of its cluster, when ``assignment`` is given). Errors are
    measured in original units and averaged over nodes, then folds.

    Arguments:
        greedy (bool): First fix the graph whose edge density is closest to
            ``target_density``, then search only the reconstruction hyperparameters.
        workers (int): Threads used for (fold, graph cell) tasks.
    """
    kind = MethodKind(method)
    grid = grid or HyperGrid()
    values, node_ids = _complete_values(x)
    p, n = values.shape
    if assignment is not None and assignment.n != n:
        raise DataError(f'Assignment covers {assignment.n} nodes, data has {n}')
    folds = kfold_split(p, k, seed, fold_mode)
    graph_cells = grid.graph_cells(kind)
    if greedy:
        graph_cells = _select_density(values, kind, graph_cells, target_density, assignment, learn_options,
                                      glasso_cfg, tau)
    method_cells = grid.method_cells(kind, n if assignment is None else min(len(m) for m in assignment.member_lists))

    def run(task):
        fold, g = task
        test = folds[fold]
        train = np.setdiff1d(np.arange(p), test)
        params = fit_standardization(values, train)
        z_train = standardize(values[train], params)
        z_test = standardize(values[test], params)
        try:
            fitted = fit_graph(z_train, kind, graph_cells[g], assignment, learn_options, glasso_cfg, tau)
        except AirGsrError as e:
            return task, f'graph failed: {e}', None
        if kind == MethodKind.KRR_COV and not fitted.converged:
            return task, 'graphical lasso did not converge', None
        out = []
        for spec in method_cells:
            try:
                reports = _leave_one_out(fitted, spec, z_test, values[test], params)
            except ComputationError as e:
                out.append((spec, f'reconstruction failed: {e}', None))
                continue
            if not reports:
                out.append((spec, 'no reconstructable node', None))
                continue
            out.append((spec, None, _fold_summary(fold, reports, fitted.edges)))
        return task, None, out

    tasks = list(itertools.product(range(k), range(len(graph_cells))))
    outcomes = Parallel(n_jobs=workers, prefer='threads')(delayed(run)(t) for t in tasks)

    cells: Dict[Tuple[int, int], CVCell] = {}
    for g, gp in enumerate(graph_cells):
        for m, spec in enumerate(method_cells):
            cells[(g, m)] = CVCell({**gp, **spec.hyperparameters()})
    for (fold, g), failure, out in outcomes:
        for m, spec in enumerate(method_cells):
            cell = cells[(g, m)]
            if failure is not None:
                cell.skipped = cell.skipped or failure
                continue
            _, reason, summary = out[m]
            if reason is not None:
                cell.skipped = cell.skipped or reason
            else:
                cell.folds.append(summary)

    ordered = [cells[key] for key in sorted(cells)]
    for cell in ordered:
        cell.folds.sort(key=lambda f: f.fold)
        _finalize(cell)
        logger.debug(f'CV cell {cell.hyperparameters}: rmse {cell.mean_rmse:.6g}, skipped={cell.skipped}')

    usable = [i for i, c in enumerate(ordered) if c.skipped is None]
    if not usable:
        raise ComputationError('Every cross-validation cell failed')
    best = min(usable, key=lambda i: ordered[i].sort_key())
    logger.info(f'Best {kind.value} cell {ordered[best].hyperparameters}: RMSE {ordered[best].mean_rmse:.4f}, '
                f'R2 {ordered[best].mean_r2:.4f}')
    return CVResult(kind, ordered, best, seed, k, node_ids)


def cluster_r2(result: CVResult, assignment: ClusterAssignment) -> List[Optional[float]]:
    """Average best-cell R^2 of the nodes of each cluster (None for singletons)."""
    per_node = result.best_cell.per_node()
    out = []
    for idx in assignment.member_lists:
        r2 = [per_node[n]['r2'] for n in idx if n in per_node]
        out.append(_nanmean(r2) if r2 else None)
    return out


def split_hyperparameters(kind: Union[MethodKind, str], hyperparameters: dict) -> Tuple[dict, MethodSpec]:
    """Separate a CV cell's hyperparameters into graph and reconstruction parts."""
    kind = MethodKind(kind)
    graph_keys = ('lambda',) if kind == MethodKind.KRR_COV else ('alpha', 'beta')
    try:
        graph_params = {key: hyperparameters[key] for key in graph_keys}
    except KeyError as e:
        raise ConfigError(f'{kind.value} needs hyperparameter {e}') from e
    spec = MethodSpec(kind=kind, **{key: hyperparameters[key] for key in ('k', 'mu', 'sigma2')
                                    if key in hyperparameters})
    return graph_params, spec


@dataclass(frozen=True)
class CurvePoint:
    pct_available: float
    n_available: int
    mean_rmse: Optional[float]
    ci95: Optional[float]
    rmses: Tuple[float, ...] = ()
    failed: int = 0


@dataclass(frozen=True)
class SemiSupervisedCurve:
    """Mean CV RMSE versus the percentage of available nodes."""

    method: MethodSpec
    graph_params: dict
    points: List[CurvePoint]
    reps: int
    seed: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'pct_available': pt.pct_available,
            'n_available': pt.n_available,
            'mean_rmse': pt.mean_rmse,
            'ci95_low': None if pt.mean_rmse is None else pt.mean_rmse - pt.ci95,
            'ci95_high': None if pt.mean_rmse is None else pt.mean_rmse + pt.ci95,
        } for pt in self.points])

    def to_dict(self) -> dict:
        return {
            'method': self.method.kind.value,
            'hyperparameters': {**self.graph_params, **self.method.hyperparameters()},
            'reps': self.reps,
            'seed': self.seed,
            'points': [{'pct_available': pt.pct_available, 'n_available': pt.n_available,
                        'mean_rmse': pt.mean_rmse, 'ci95': pt.ci95, 'rmses': list(pt.rmses), 'failed': pt.failed}
                       for pt in self.points],
        }


def _availability_rmse(method: MethodSpec, fold_models, values: np.ndarray, pattern: SamplingPattern) -> float:
    fold_rmse = []
    for test, params, model in fold_models:
        r = fit_method(method, model, pattern)
        z_test = standardize(values[test], params)
        pred = reconstruct(r, z_test[:, pattern.m_idx]) * params.stds[pattern.u_idx] + params.means[pattern.u_idx]
        node_rmse = np.sqrt(((pred - values[np.ix_(test, pattern.u_idx)]) ** 2).mean(axis=0))
        fold_rmse.append(float(node_rmse.mean()))
    return float(np.mean(fold_rmse))


def semi_supervised_eval(x, method: MethodSpec, graph_params: dict, percentages: Sequence[float], reps: int = 10,
                         seed: int = 0, k: int = 5, *, fold_mode: str = 'shuffle', learn_options: dict = None,
                         glasso_cfg: GlassoConfig = None) -> SemiSupervisedCurve:
    """Hide a random node subset across each test fold and reconstruct it jointly.

    For every percentage and repetition a seeded subset of nodes stays available;
    the rest are reconstructed together. The RMSE of a repetition averages the
    hidden nodes' RMSEs over the folds; the curve reports the mean over
    repetitions with a normal-approximation 95% confidence interval.
    Repetitions whose reconstruction cannot be fitted (a GSP bandwidth above
    the available node count) are logged and counted in ``failed``; a point
    with no successful repetition has no mean.
    """
    percentages = list(percentages)
    if not percentages:
        raise ConfigError('At least one availability percentage is required')
    if any(not 0 < pct <= 100 for pct in percentages):
        raise ConfigError(f'Percentages must lie in (0, 100], got {percentages}')
    if reps < 1:
        raise ConfigError(f'reps must be >= 1, got {reps}')
    values, _ = _complete_values(x)
    p, n = values.shape
    availability = []
    for pct in percentages:
        n_available = int(round(pct / 100.0 * n))
        if n_available < 1:
            raise DataError(f'{pct}% of {n} nodes leaves no observed node')
        availability.append(n_available)

    folds = kfold_split(p, k, seed, fold_mode)
    fold_models = []
    for test in folds:
        train = np.setdiff1d(np.arange(p), test)
        params = fit_standardization(values, train)
        fitted = fit_graph(standardize(values[train], params), method.kind, graph_params, None,
                           learn_options, glasso_cfg)
        fold_models.append((test, params, fitted.models[0]))

    points = []
    for i, (pct, n_available) in enumerate(zip(percentages, availability)):
        if n_available == n:
            points.append(CurvePoint(float(pct), n_available, None, None))
            continue
        rmses = []
        failed = 0
        for rep in range(reps):
            rng = np.random.default_rng([seed, rep, i])
            mask = np.zeros(n, dtype=bool)
            mask[rng.choice(n, n_available, replace=False)] = True
            pattern = SamplingPattern.from_mask(mask)
            try:
                rmses.append(_availability_rmse(method, fold_models, values, pattern))
            except ComputationError as e:
                logger.warning(f'{pct}% available, repetition {rep}: {e}')
                failed += 1
        if not rmses:
            points.append(CurvePoint(float(pct), n_available, None, None, (), failed))
            continue
        ci = Z_95 * float(np.std(rmses, ddof=1)) / np.sqrt(len(rmses)) if len(rmses) > 1 else 0.0
        points.append(CurvePoint(float(pct), n_available, float(np.mean(rmses)), ci, tuple(rmses), failed))
        logger.debug(f'{pct}% available: RMSE {points[-1].mean_rmse:.4f} +/- {ci:.4f}')

    return SemiSupervisedCurve(method, dict(graph_params), points, reps, seed)


@dataclass(frozen=True)
class DriftReport:
    """Drift injected on one node of the test split and its reconstruction."""

    target: int
    drifted_rmse: float
    reconstructed_rmse: float
    excluded: Tuple[int, ...]
    hyperparameters: dict
    truth: np.ndarray
    drifted: np.ndarray
    reconstructed: np.ndarray
    sigma: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'truth': self.truth, 'drifted': self.drifted,
                             'reconstructed': self.reconstructed, 'sigma': self.sigma})

    def to_dict(self) -> dict:
        return {'target': self.target, 'drifted_rmse': self.drifted_rmse,
                'reconstructed_rmse': self.reconstructed_rmse, 'excluded': list(self.excluded),
                'hyperparameters': self.hyperparameters}


def _node_index(node, node_ids) -> int:
    if isinstance(node, (int, np.integer)):
        if not 0 <= node < len(node_ids):
            raise DataError(f'Node index {node} out of range')
        return int(node)
    if node not in node_ids:
        raise DataError(f'Unknown node "{node}"')
    return node_ids.index(node)


def drift_simulation(x, target_node, noise_sigmas: Sequence[float], method: Union[MethodKind, str],
                     train_fraction: float = 0.66, exclude_nodes: Sequence = (), *, grid: HyperGrid = None,
                     hyperparameters: dict = None, k: int = 5, seed: int = 0, learn_options: dict = None,
                     glasso_cfg: GlassoConfig = None, tau: float = DEFAULT_EDGE_TAU) -> DriftReport:
    """Simulate a drifting sensor and compensate it by reconstruction.

    The first ``train_fraction`` of the rows select hyperparameters by CV (unless
    ``hyperparameters`` is given) and learn the graph. On the remaining rows the
    target gets Gaussian noise whose standard deviation steps through
    ``noise_sigmas`` over equal consecutive segments. The target, plus any
    ``exclude_nodes``, is then treated as unobserved and reconstructed.
    """
    kind = MethodKind(method)
    values, node_ids = _complete_values(x)
    p, n = values.shape
    target = _node_index(target_node, list(node_ids))
    excluded = tuple(sorted({_node_index(v, list(node_ids)) for v in exclude_nodes} - {target}))
    sigmas = np.asarray(list(noise_sigmas), dtype=float)
    if sigmas.size == 0 or (sigmas < 0).any() or (np.diff(sigmas) < 0).any():
        raise ConfigError(f'Noise sigmas must be a nonempty nondecreasing list of values >= 0, got {sigmas.tolist()}')
    if not 0 < train_fraction < 1:
        raise ConfigError(f'train_fraction must lie in (0, 1), got {train_fraction}')
    n_train = int(np.floor(train_fraction * p))
    if n_train < 2 or n_train >= p:
        raise DataError(f'{p} rows cannot be split at {train_fraction}')

    train, test = values[:n_train], values[n_train:]
    if hyperparameters is None:
        cv = cross_validate(train, kind, grid, k, seed, learn_options=learn_options, glasso_cfg=glasso_cfg, tau=tau)
        hyperparameters = cv.best_cell.hyperparameters
    graph_params, spec = split_hyperparameters(kind, hyperparameters)
    params = fit_standardization(train)
    z_train = standardize(train, params)

    mask = np.ones(n, dtype=bool)
    mask[[target, *excluded]] = False
    if not mask.any():
        raise DataError('Excluding these nodes leaves no observed node')
    if kind == MethodKind.KRR_COV:
        estimate = graphical_lasso(empirical_covariance(z_train), graph_params['lambda'], cfg=glasso_cfg)
        model = GraphModel(covariance=KernelMatrix(estimate.sigma))
        adjacency = precision_to_adjacency(estimate.theta, tau).w
    else:
        model = fit_graph(z_train, kind, graph_params, learn_options=learn_options, tau=tau).models[0]
        adjacency = model.laplacian.weights().w
    if not (adjacency[target, mask] > tau).any():
        raise DataError(f'Node {node_ids[target]} has no observed neighbor after exclusions')

    truth = test[:, target].copy()
    schedule = np.concatenate([np.full(len(chunk), s) for chunk, s in
                               zip(np.array_split(np.arange(len(test)), sigmas.size), sigmas)])
    drifted = truth + np.random.default_rng(seed).normal(0.0, 1.0, len(test)) * schedule

    pattern = SamplingPattern.from_mask(mask)
    r = fit_method(spec, model, pattern)
    z_test = standardize(test, params)
    row = int(np.flatnonzero(pattern.u_idx == target)[0])
    reconstructed = reconstruct(r, z_test[:, pattern.m_idx])[:, row] * params.stds[target] + params.means[target]

    report = DriftReport(target, metrics(truth, drifted).rmse, metrics(truth, reconstructed).rmse, excluded,
                         dict(hyperparameters), truth, drifted, reconstructed, schedule)
    logger.info(f'Drift on {node_ids[target]}: drifted RMSE {report.drifted_rmse:.3f}, '
                f'reconstructed RMSE {report.reconstructed_rmse:.3f}')
    return report
