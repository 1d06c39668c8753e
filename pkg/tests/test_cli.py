import json

import numpy as np
import pytest

from air_gsr.cli import run
from air_gsr.core import Core, RunConfig
from air_gsr.data import load_csv
from air_gsr.errors import ConfigError
from air_gsr.graph.laplacian import load_graph

from conftest import two_group_data, write_csv


def _files(path):
    return sorted(p.name for p in path.iterdir())


def test_info(group_csv, tmp_path):
    out = tmp_path / 'out'
    assert run(['info', '--data', str(group_csv), '--out', str(out)]) == 0
    info = json.loads((out / 'info.json').read_text())
    assert (info['nodes'], info['samples']) == (6, 60)


def test_missing_data_file_is_usage_error(tmp_path):
    assert run(['info', '--data', str(tmp_path / 'nope.csv'), '--out', str(tmp_path)]) == 2


@pytest.mark.parametrize('argv', [
    ['learn', '--method', 'cubic'],
    ['frobnicate'],
    ['cv', '--alpha', 'one,two'],
    ['cv', '--clusters', 'many'],
])
def test_bad_flags_are_usage_errors(argv):
    assert run(argv) == 2


def test_learn_whole_graph(group_csv, tmp_path):
    out = tmp_path / 'model'
    assert run(['learn', '--data', str(group_csv), '--alpha', '1', '--beta', '1', '--out', str(out)]) == 0
    assert {'graph.json', 'standardization.json', 'learn_report.json'} <= set(_files(out))
    laplacian, nodes = load_graph(out / 'graph.json')
    assert laplacian.n == 6
    assert np.trace(laplacian.l) == pytest.approx(6.0)


def test_learn_needs_single_values(group_csv, tmp_path):
    assert run(['learn', '--data', str(group_csv), '--alpha', '1,2', '--beta', '1', '--out', str(tmp_path)]) == 2


def test_learn_per_cluster_writes_blocks(group_csv, tmp_path):
    out = tmp_path / 'model'
    assert run(['learn', '--data', str(group_csv), '--alpha', '1', '--beta', '1', '--clusters', '2',
                '--out', str(out)]) == 0
    assert {'graph_cluster_0.json', 'graph_cluster_1.json', 'clusters.json'} <= set(_files(out))

    merged, _ = load_graph(out / 'graph.json')
    clusters = json.loads((out / 'clusters.json').read_text())
    labels = np.asarray(clusters['labels'])
    assert clusters['c'] == 2
    assert np.all(merged.l[np.ix_(labels == 0, labels == 1)] == 0.0)


@pytest.fixture
def model_dir(group_csv, tmp_path):
    out = tmp_path / 'model'
    assert run(['learn', '--data', str(group_csv), '--alpha', '1', '--beta', '1', '--clusters', '2',
                '--out', str(out)]) == 0
    return out


class TestReconstruct:

    def _sample(self, tmp_path, missing):
        values = two_group_data(np.random.default_rng(9), p=3)
        return write_csv(tmp_path / 'sample.csv', values, start='2020-01-01', missing=missing), values

    def _run(self, model_dir, sample, out):
        return run(['reconstruct', '--data', str(sample), '--model', str(model_dir), '--method', 'lapint',
                    '--out', str(out)])

    def test_complete_sample_echoed(self, model_dir, tmp_path):
        sample, values = self._sample(tmp_path, [])
        assert self._run(model_dir, sample, tmp_path / 'out') == 0
        np.testing.assert_array_equal(load_csv(tmp_path / 'out' / 'reconstructed.csv').values,
                                      load_csv(sample).values)

    def test_missing_node_filled(self, model_dir, tmp_path):
        sample, values = self._sample(tmp_path, [(1, 4)])
        before = sample.read_bytes()
        assert self._run(model_dir, sample, tmp_path / 'out') == 0
        filled = load_csv(tmp_path / 'out' / 'reconstructed.csv')

        assert filled.is_complete
        assert np.isfinite(filled.values[1, 4])
        np.testing.assert_array_equal(filled.values[0], load_csv(sample).values[0])
        assert sample.read_bytes() == before

    def test_unobserved_cluster_fails(self, model_dir, tmp_path):
        clusters = json.loads((model_dir / 'clusters.json').read_text())
        cluster_one = [i for i, v in enumerate(clusters['labels']) if v == 1]
        sample, _ = self._sample(tmp_path, [(0, i) for i in cluster_one])
        assert self._run(model_dir, sample, tmp_path / 'out') == 1

    @pytest.mark.parametrize('method', ['gsp', 'krr-diff', 'krr-cov'])
    def test_method_must_match_learned_model(self, model_dir, tmp_path, method):
        sample, _ = self._sample(tmp_path, [(1, 4)])
        assert run(['reconstruct', '--data', str(sample), '--model', str(model_dir), '--method', method,
                    '--k', '2', '--mu', '0.1', '--sigma2', '1', '--out', str(tmp_path / 'out')]) == 2
        assert not (tmp_path / 'out' / 'reconstructed.csv').exists()

    def test_covariance_model_rejects_laplacian_method(self, group_csv, tmp_path):
        model = tmp_path / 'cov_model'
        assert run(['learn', '--data', str(group_csv), '--method', 'krr-cov', '--lambda', '0.1',
                    '--out', str(model)]) == 0
        sample, _ = self._sample(tmp_path, [(1, 4)])
        assert self._run(model, sample, tmp_path / 'out') == 2

    def test_needs_model(self, tmp_path):
        sample, _ = self._sample(tmp_path, [])
        assert run(['reconstruct', '--data', str(sample), '--out', str(tmp_path)]) == 2


def test_cluster_auto(group_csv, tmp_path):
    assert run(['cluster', '--data', str(group_csv), '--clusters', 'auto', '--out', str(tmp_path)]) == 0
    clusters = json.loads((tmp_path / 'clusters.json').read_text())
    assert clusters['c'] == 2
    assert clusters['problem_size_reduction'] == pytest.approx(0.5)
    assert len(clusters['scores']) == 4


def test_cv_is_reproducible(group_csv, tmp_path):
    argv = ['cv', '--data', str(group_csv), '--method', 'lapint', '--alpha', '0.5,1', '--beta', '1',
            '--folds', '3', '--seed', '4']
    assert run(argv + ['--out', str(tmp_path / 'a')]) == 0
    assert run(argv + ['--out', str(tmp_path / 'b')]) == 0
    for name in ('cv_result.json', 'cv_result.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_cv_greedy(group_csv, tmp_path):
    assert run(['cv', '--data', str(group_csv), '--method', 'gsp', '--alpha', '0.5,1', '--beta', '1',
                '--k', '1,2', '--folds', '3', '--greedy', '--out', str(tmp_path)]) == 0
    result = json.loads((tmp_path / 'cv_result.json').read_text())
    assert len(result['cells']) == 2


def test_semi_eval_writes_curve(group_csv, tmp_path):
    assert run(['semi-eval', '--data', str(group_csv), '--method', 'lapint', '--alpha', '1', '--beta', '1',
                '--percentages', '50,100', '--reps', '2', '--folds', '3', '--out', str(tmp_path)]) == 0
    header = (tmp_path / 'semi_supervised.csv').read_text().splitlines()[0]
    assert header == 'pct_available,n_available,mean_rmse,ci95_low,ci95_high'


def test_semi_eval_empty_percentages(group_csv, tmp_path):
    assert run(['semi-eval', '--data', str(group_csv), '--method', 'lapint', '--alpha', '1', '--beta', '1',
                '--percentages', '', '--out', str(tmp_path)]) == 2


def test_drift_sim(tmp_path):
    rng = np.random.default_rng(3)
    factor = 30.0 * rng.normal(size=(120, 1))
    data = write_csv(tmp_path / 'net.csv', 50 + factor + rng.normal(size=(120, 8)))
    assert run(['drift-sim', '--data', str(data), '--method', 'lapint', '--alpha', '1', '--beta', '1',
                '--target', 'st03', '--sigmas', '10,20,30,40', '--out', str(tmp_path / 'out')]) == 0
    report = json.loads((tmp_path / 'out' / 'drift_report.json').read_text())
    assert report['target_id'] == 'st03'
    assert report['reconstructed_rmse'] < report['drifted_rmse']
    assert (tmp_path / 'out' / 'drift_series.csv').exists()


def test_drift_sim_needs_target(group_csv, tmp_path):
    assert run(['drift-sim', '--data', str(group_csv), '--out', str(tmp_path)]) == 2


class TestConfiguration:

    def test_config_file_then_flags(self, tmp_path):
        config = tmp_path / 'run.yaml'
        config.write_text('method: krr-diff\ngrid:\n  mus: [0.5]\ncv:\n  seed: 3\n  folds: 4\n')
        core = Core.from_flags(['cv', '--config', str(config), '--seed', '9'])

        cfg = core.run_config
        assert cfg.method == 'krr-diff'
        assert cfg.grid.mus == [0.5]
        assert cfg.cv.folds == 4
        assert cfg.cv.seed == 9

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / 'run.yaml'
        config.write_text('grid:\n  gamma: [1.0]\n')
        with pytest.raises(ConfigError):
            Core.from_flags(['cv', '--config', str(config)])
        assert run(['cv', '--config', str(config)]) == 2

    def test_unrecognized_core_option(self):
        with pytest.raises(ConfigError):
            Core(command='info', verbose=True)

    def test_defaults(self):
        cfg = Core(command='info').run_config
        assert isinstance(cfg, RunConfig)
        assert cfg.cv.folds == 5
        assert cfg.experiment.train_fraction == pytest.approx(0.66)
        assert cfg.clusters is None
