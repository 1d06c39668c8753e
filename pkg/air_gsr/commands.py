"""air-gsr subcommand handlers.

Every handler returns ``{'data': summary}`` on success or
``{'error': message, 'exit_code': code}`` on failure.
"""
from typing import List, Tuple

import numpy as np
from loguru import logger

from air_gsr.core import Core, CoreManager
from air_gsr.data import (
    StandardizationParams,
    TimeSeriesMatrix,
    complete_rows,
    fit_standardization,
    read_json,
    save_csv,
    standardize,
    summarize_dataset,
    write_json,
)
from air_gsr.errors import AirGsrError, ConfigError, DataError
from air_gsr.evaluation import cluster_r2, cross_validate, drift_simulation, semi_supervised_eval, split_hyperparameters
from air_gsr.graph.clustering import (
    ClusterAssignment,
    choose_cluster_count,
    clusterwise_learn,
    clusterwise_reconstruct,
    hierarchical_cluster,
    problem_size_reduction,
    score_cluster_count,
)
from air_gsr.graph.covariance import empirical_covariance, graphical_lasso, precision_to_adjacency
from air_gsr.graph.laplacian import (
    GraphSignal,
    LaplacianMatrix,
    block_diagonal,
    edge_set,
    laplacian_from_weights,
    load_graph,
    save_graph,
)
from air_gsr.graph.learning import SmoothLearnConfig
from air_gsr.reconstruction import GraphModel, KernelMatrix, MethodKind, MethodSpec


def _exit_code(e: Exception) -> int:
    return e.exit_code if isinstance(e, AirGsrError) else 1


def _single(values, flag: str):
    if values is None or len(values) != 1:
        raise ConfigError(f'Expected exactly one {flag} value, got {values}')
    return values[0]


def _assignment(core: Core, x: TimeSeriesMatrix, scores: list = None) -> ClusterAssignment:
    """Partition requested by ``--clusters``; a single cluster when unset."""
    cfg = core.run_config
    if cfg.clusters is None:
        return ClusterAssignment.single(x.n)
    c = cfg.clusters
    if c == 'auto':
        c_range = [c for c in cfg.cluster_range if 2 <= c <= x.n - 1]
        if not c_range:
            raise ConfigError(f'No candidate cluster count fits N={x.n}')
        if scores is not None:
            scores.extend(score_cluster_count(x, c_range, cfg.cluster_metric))
        c = choose_cluster_count(x, c_range, cfg.cluster_metric)
    return hierarchical_cluster(x, c)


def _graph_hyperparameters(core: Core, kind: MethodKind) -> dict:
    grid = core.run_config.grid
    if kind == MethodKind.KRR_COV:
        return {'lambda': _single(grid.lambdas, '--lambda')}
    return {'alpha': _single(grid.alphas, '--alpha'), 'beta': _single(grid.betas, '--beta')}


def _method_spec(core: Core, kind: MethodKind) -> MethodSpec:
    grid = core.run_config.grid
    if kind == MethodKind.GSP_LOWPASS:
        return MethodSpec(kind=kind, k=_single(grid.ks, '--k'))
    if kind == MethodKind.KRR_DIFF:
        return MethodSpec(kind=kind, mu=_single(grid.mus, '--mu'), sigma2=_single(grid.sigma2s, '--sigma2'))
    if kind == MethodKind.KRR_COV:
        return MethodSpec(kind=kind, mu=_single(grid.mus, '--mu'))
    return MethodSpec(kind=kind)


def _resolve_hyperparameters(core: Core, x: TimeSeriesMatrix, kind: MethodKind) -> dict:
    """Use the given single values, or select them by CV when any grid has several."""
    try:
        return {**_graph_hyperparameters(core, kind), **_method_spec(core, kind).hyperparameters()}
    except ConfigError:
        cfg = core.run_config
        logger.info(f'Selecting {kind.value} hyperparameters by {cfg.cv.folds}-fold CV')
        result = cross_validate(x, kind, cfg.grid, cfg.cv.folds, cfg.cv.seed, fold_mode=cfg.cv.fold_mode,
                                greedy=cfg.cv.greedy, target_density=cfg.cv.target_density,
                                learn_options=core.learn_options, glasso_cfg=cfg.glasso, tau=cfg.tau,
                                workers=cfg.cv.workers)
        return result.best_cell.hyperparameters


def _resolve_nodes(names, x: TimeSeriesMatrix) -> List[int]:
    out = []
    for name in names:
        if name in x.node_ids:
            out.append(x.node_ids.index(name))
        elif name.isdigit() and int(name) < x.n:
            out.append(int(name))
        else:
            raise ConfigError(f'Unknown node "{name}"')
    return out


def _learn(core: Core) -> dict:
    cfg = core.run_config
    kind = cfg.method
    x = complete_rows(core.dataset())
    params = fit_standardization(x.values)
    z = standardize(x.values, params)
    assignment = _assignment(core, x)
    graph_params = _graph_hyperparameters(core, kind)
    out = core.out_dir
    members = assignment.member_lists

    report = {'method': kind.value, 'hyperparameters': graph_params, 'samples': x.p, 'clusters': assignment.c}
    if kind == MethodKind.KRR_COV:
        estimates = [graphical_lasso(empirical_covariance(z[:, list(idx)]), graph_params['lambda'], cfg=cfg.glasso)
                     for idx in members]
        sigma = block_diagonal([e.sigma for e in estimates], members, x.n)
        theta = block_diagonal([e.theta for e in estimates], members, x.n)
        laplacian = laplacian_from_weights(precision_to_adjacency(theta, cfg.tau))
        blocks = [laplacian_from_weights(precision_to_adjacency(e.theta, cfg.tau)) for e in estimates]
        write_json(out / 'covariance.json', {'n': x.n, 'nodes': list(x.node_ids), 'lambda': graph_params['lambda'],
                                             'sigma': sigma, 'theta': theta})
        report['converged'] = all(e.converged for e in estimates)
        report['objective_traces'] = [e.objective_trace for e in estimates]
    else:
        learned = clusterwise_learn(z, assignment, SmoothLearnConfig(**graph_params, **core.learn_options),
                                    workers=cfg.cv.workers)
        laplacian = learned.laplacian
        blocks = [learned.block(k) for k in range(assignment.c)]
        report['converged'] = all(r.converged for r in learned.results if r is not None)
        report['objective_traces'] = [r.objective_trace if r is not None else [] for r in learned.results]
        report['singleton_clusters'] = list(learned.singletons)

    save_graph(out / 'graph.json', laplacian, x.node_ids)
    if assignment.c > 1:
        for k, block in enumerate(blocks):
            save_graph(out / f'graph_cluster_{k}.json', block, [x.node_ids[i] for i in members[k]])
        write_json(out / 'clusters.json', {**assignment.to_dict(), 'nodes': list(x.node_ids)})
    write_json(out / 'standardization.json', {**params.to_dict(), 'nodes': list(x.node_ids)})
    report['edges'] = len(edge_set(laplacian.weights(), cfg.tau))
    write_json(out / 'learn_report.json', report)
    logger.info(f'Learned {kind.value} model with {report["edges"]} edges into {out}')
    return {key: report[key] for key in ('method', 'hyperparameters', 'clusters', 'edges', 'converged')}


def cmd_learn(core: Core = None):
    """Learn a graph (graphical lasso covariance for krr-cov) from the complete samples.

    Writes graph.json, standardization.json and learn_report.json; with clusters
    also clusters.json and one graph_cluster_<k>.json per cluster; for krr-cov
    also covariance.json.
    """
    core = core or CoreManager.get_core()

    try:
        response = _learn(core)

        return {
            'data': response,
        }
    except Exception as e:
        error_msg = f'Error learning graph: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def cmd_cv(core: Core = None):
    """Cross-validate ``--method`` over its grid; writes cv_result.json and cv_result.csv."""
    core = core or CoreManager.get_core()

    try:
        cfg = core.run_config
        x = complete_rows(core.dataset())
        assignment = _assignment(core, x) if cfg.clusters is not None else None
        result = cross_validate(x, cfg.method, cfg.grid, cfg.cv.folds, cfg.cv.seed, fold_mode=cfg.cv.fold_mode,
                                greedy=cfg.cv.greedy, target_density=cfg.cv.target_density, assignment=assignment,
                                learn_options=core.learn_options, glasso_cfg=cfg.glasso, tau=cfg.tau,
                                workers=cfg.cv.workers)
        payload = result.to_dict()
        if assignment is not None:
            payload['clusters'] = assignment.to_dict()
            payload['cluster_r2'] = cluster_r2(result, assignment)
        write_json(core.out_dir / 'cv_result.json', payload)
        result.to_frame().to_csv(core.out_dir / 'cv_result.csv', index=False)
        best = result.best_cell

        return {
            'data': {
                'method': result.method.value,
                'best': best.hyperparameters,
                'mean_rmse': best.mean_rmse,
                'mean_mae': best.mean_mae,
                'mean_r2': best.mean_r2,
                'mean_edges': best.mean_edges,
            },
        }
    except Exception as e:
        error_msg = f'Error cross-validating: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def _load_model(core: Core, kind: MethodKind) -> Tuple[List[GraphModel], ClusterAssignment, StandardizationParams,
                                                       Tuple[str, ...]]:
    model_dir = core.model_dir()
    report_path = model_dir / 'learn_report.json'
    if not report_path.exists():
        raise ConfigError(f'{model_dir} holds no learn_report.json; run "learn" first')
    learned = read_json(report_path).get('method')
    if learned != kind.value:
        raise ConfigError(f'{model_dir} was learned for method "{learned}", not "{kind.value}"; '
                          f'reconstruct with --method {learned} or learn a {kind.value} model')
    laplacian, nodes = load_graph(model_dir / 'graph.json')
    standardization = read_json(model_dir / 'standardization.json')
    params = StandardizationParams.from_dict(standardization)
    if list(standardization.get('nodes', nodes)) != list(nodes):
        raise DataError('graph.json and standardization.json disagree on the node order')
    clusters_path = model_dir / 'clusters.json'
    assignment = (ClusterAssignment.from_dict(read_json(clusters_path)) if clusters_path.exists()
                  else ClusterAssignment.single(laplacian.n))
    if assignment.n != laplacian.n:
        raise DataError(f'clusters.json covers {assignment.n} nodes, graph.json has {laplacian.n}')

    covariance = None
    if kind == MethodKind.KRR_COV:
        cov_path = model_dir / 'covariance.json'
        if not cov_path.exists():
            raise ConfigError(f'{model_dir} holds no covariance.json; run "learn --method krr-cov" first')
        covariance = np.asarray(read_json(cov_path)['sigma'], dtype=float)

    models = []
    for idx in assignment.member_lists:
        idx = np.asarray(idx)
        block = LaplacianMatrix(laplacian.l[np.ix_(idx, idx)])
        kernel = KernelMatrix(covariance[np.ix_(idx, idx)]) if covariance is not None else None
        models.append(GraphModel(laplacian=block, covariance=kernel))
    return models, assignment, params, tuple(nodes)


def cmd_reconstruct(core: Core = None):
    """Fill the missing cells of ``--data`` with the model stored in ``--model``.

    Rows without missing cells are written back unchanged; the result goes to
    reconstructed.csv.
    """
    core = core or CoreManager.get_core()

    try:
        kind = core.run_config.method
        spec = _method_spec(core, kind)
        models, assignment, params, nodes = _load_model(core, kind)
        x = core.dataset()
        missing = set(nodes).difference(x.node_ids)
        if missing or x.n != len(nodes):
            raise DataError(f'Sample columns do not match the model nodes (missing {sorted(missing)})')
        x = x.take_nodes([x.node_ids.index(n) for n in nodes])

        filled = np.array(x.values)
        rows = np.flatnonzero(~x.mask.all(axis=1))
        for row in rows:
            filled[row] = clusterwise_reconstruct(models, assignment, spec,
                                                  GraphSignal(x.values[row], x.mask[row]), params)
        out = TimeSeriesMatrix(x.timestamps, x.node_ids, filled)
        save_csv(out, core.out_dir / 'reconstructed.csv')
        logger.info(f'Reconstructed {len(rows)} incomplete samples of {x.p}')

        return {
            'data': {
                'samples': x.p,
                'reconstructed_samples': int(len(rows)),
                'reconstructed_cells': int((~x.mask).sum()),
            },
        }
    except Exception as e:
        error_msg = f'Error reconstructing samples: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def cmd_cluster(core: Core = None):
    """Ward clustering of the nodes; writes clusters.json."""
    core = core or CoreManager.get_core()

    try:
        if core.run_config.clusters is None:
            raise ConfigError('"cluster" needs --clusters N or --clusters auto')
        x = complete_rows(core.dataset())
        scores = []
        assignment = _assignment(core, x, scores)
        payload = {
            **assignment.to_dict(),
            'nodes': list(x.node_ids),
            'members': [[x.node_ids[i] for i in idx] for idx in assignment.member_lists],
            'problem_size_reduction': problem_size_reduction(assignment),
        }
        if scores:
            payload['scores'] = [{'c': s.c, 'score': None if s.degenerate else s.score, 'degenerate': s.degenerate}
                                 for s in scores]
        write_json(core.out_dir / 'clusters.json', payload)

        return {
            'data': {key: payload[key] for key in ('c', 'members', 'problem_size_reduction')},
        }
    except Exception as e:
        error_msg = f'Error clustering nodes: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def cmd_semi_eval(core: Core = None):
    """RMSE versus percentage of available nodes; writes semi_supervised.csv and .json."""
    core = core or CoreManager.get_core()

    try:
        cfg = core.run_config
        x = complete_rows(core.dataset())
        hyperparameters = _resolve_hyperparameters(core, x, cfg.method)
        graph_params, spec = split_hyperparameters(cfg.method, hyperparameters)
        curve = semi_supervised_eval(x, spec, graph_params, cfg.experiment.percentages, cfg.experiment.reps,
                                     cfg.cv.seed, cfg.cv.folds, fold_mode=cfg.cv.fold_mode,
                                     learn_options=core.learn_options, glasso_cfg=cfg.glasso)
        curve.to_frame().to_csv(core.out_dir / 'semi_supervised.csv', index=False)
        write_json(core.out_dir / 'semi_supervised.json', curve.to_dict())

        return {
            'data': {
                'hyperparameters': hyperparameters,
                'points': [{'pct_available': p.pct_available, 'mean_rmse': p.mean_rmse, 'ci95': p.ci95,
                            'failed': p.failed}
                           for p in curve.points],
            },
        }
    except Exception as e:
        error_msg = f'Error running semi-supervised evaluation: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def cmd_drift_sim(core: Core = None):
    """Inject drift on ``--target`` and reconstruct it; writes drift_report.json and drift_series.csv."""
    core = core or CoreManager.get_core()

    try:
        cfg = core.run_config
        exp = cfg.experiment
        if exp.target is None:
            raise ConfigError('"drift-sim" needs --target')
        x = complete_rows(core.dataset())
        target = _resolve_nodes([exp.target], x)[0]
        exclude = _resolve_nodes(exp.exclude, x)
        try:
            hyperparameters = {**_graph_hyperparameters(core, cfg.method),
                               **_method_spec(core, cfg.method).hyperparameters()}
        except ConfigError:
            hyperparameters = None
        report = drift_simulation(x, target, exp.sigmas, cfg.method, exp.train_fraction, exclude, grid=cfg.grid,
                                  hyperparameters=hyperparameters, k=cfg.cv.folds, seed=cfg.cv.seed,
                                  learn_options=core.learn_options, glasso_cfg=cfg.glasso, tau=cfg.tau)
        payload = report.to_dict()
        payload['target_id'] = x.node_ids[report.target]
        payload['excluded_ids'] = [x.node_ids[i] for i in report.excluded]
        write_json(core.out_dir / 'drift_report.json', payload)
        series = report.to_frame()
        series.insert(0, 'timestamp', [t.isoformat() for t in x.timestamps[x.p - len(series):]])
        series.to_csv(core.out_dir / 'drift_series.csv', index=False)

        return {
            'data': payload,
        }
    except Exception as e:
        error_msg = f'Error simulating drift: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }


def cmd_info(core: Core = None):
    """Dataset summary (N, P, period, mean, pooled std); writes info.json."""
    core = core or CoreManager.get_core()

    try:
        summary = summarize_dataset(core.dataset())
        write_json(core.out_dir / 'info.json', summary)

        return {
            'data': summary,
        }
    except Exception as e:
        error_msg = f'Error summarizing dataset: {str(e)}'
        logger.error(error_msg)

        return {
            'error': error_msg,
            'exit_code': _exit_code(e),
        }
