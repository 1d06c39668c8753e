import numpy as np
import pytest

from air_gsr.data import StandardizationParams, standardize, unstandardize
from air_gsr.errors import ClusterUnobservedError, ConfigError, DataError
from air_gsr.graph.clustering import (
    ClusterAssignment,
    choose_cluster_count,
    clusterwise_learn,
    clusterwise_reconstruct,
    hierarchical_cluster,
    problem_size_reduction,
    score_cluster_count,
)
from air_gsr.graph.laplacian import GraphSignal
from air_gsr.graph.learning import SmoothLearnConfig
from air_gsr.reconstruction import GraphModel, KernelMatrix, MethodKind, MethodSpec, reconstruct_signal

from conftest import random_laplacian, two_group_data


class TestClusterAssignment:

    def test_labels_are_canonical(self):
        assert ClusterAssignment((5, 5, 2, 7, 2)).labels == (0, 0, 1, 2, 1)

    def test_members(self):
        a = ClusterAssignment.from_members([[1, 3], [0, 2]])
        assert a.labels == (0, 1, 0, 1)
        assert a.member_lists == ((0, 2), (1, 3))
        assert a.c == 2

    def test_from_members_must_partition(self):
        with pytest.raises(DataError):
            ClusterAssignment.from_members([[0, 2], []])

    def test_dict_round_trip_checks_count(self):
        a = ClusterAssignment((0, 1, 1))
        assert ClusterAssignment.from_dict(a.to_dict()) == a
        with pytest.raises(DataError):
            ClusterAssignment.from_dict({'c': 3, 'labels': [0, 1, 1]})


def test_ward_separates_groups(rng):
    x = two_group_data(rng, sizes=(3, 4))
    assert hierarchical_cluster(x, 2).labels == (0, 0, 0, 1, 1, 1, 1)


def test_cluster_count_edges(rng):
    x = rng.normal(size=(10, 4))
    assert hierarchical_cluster(x, 1).c == 1
    assert hierarchical_cluster(x, 4).labels == (0, 1, 2, 3)
    with pytest.raises(ConfigError):
        hierarchical_cluster(x, 5)
    with pytest.raises(ConfigError):
        hierarchical_cluster(x, 0)


@pytest.mark.parametrize('metric', ['calinski_harabasz', 'silhouette'])
def test_score_prefers_true_count(rng, metric):
    x = two_group_data(rng, sizes=(4, 4), noise=0.1)
    assert choose_cluster_count(x, range(2, 6), metric) == 2


def test_zero_dispersion_is_degenerate(rng):
    factor = rng.normal(size=(20, 1))
    x = np.hstack([np.repeat(factor, 3, axis=1), np.repeat(5 + factor * 2, 3, axis=1)])
    scores = score_cluster_count(x, [2])
    assert scores[0].degenerate
    assert scores[0].score == float('inf')


def test_score_range_validated(rng):
    with pytest.raises(ConfigError):
        score_cluster_count(rng.normal(size=(10, 4)), [1, 2])
    with pytest.raises(ConfigError):
        score_cluster_count(rng.normal(size=(10, 4)), [2], metric='davies')


def test_problem_size_reduction():
    assert problem_size_reduction(ClusterAssignment((0, 0, 0, 1))) == pytest.approx(0.25)
    assert problem_size_reduction(ClusterAssignment.single(5)) == 0.0


def test_clusterwise_learn_is_block_diagonal(rng):
    x = two_group_data(rng, sizes=(3, 4))
    assignment = ClusterAssignment((0, 1, 0, 1, 0, 1, 1))
    learned = clusterwise_learn(x, assignment, SmoothLearnConfig(alpha=1.0, beta=1.0))
    l = learned.laplacian.l  # noqa: E741

    members = assignment.member_lists
    assert np.all(l[np.ix_(members[0], members[1])] == 0.0)
    for k, idx in enumerate(members):
        np.testing.assert_array_equal(learned.block(k).l, l[np.ix_(idx, idx)])
        assert np.trace(learned.block(k).l) == pytest.approx(len(idx))


def test_singleton_cluster_gets_empty_block(rng):
    x = rng.normal(size=(20, 4))
    learned = clusterwise_learn(x, ClusterAssignment((0, 0, 0, 1)), SmoothLearnConfig(alpha=1.0, beta=1.0))
    assert learned.singletons == (1,)
    assert learned.results[1] is None
    assert learned.laplacian.l[3, 3] == 0.0


def test_parallel_learning_matches_serial(rng):
    x = rng.normal(size=(30, 6))
    a = ClusterAssignment((0, 0, 0, 1, 1, 1))
    cfg = SmoothLearnConfig(alpha=1.0, beta=1.0)
    np.testing.assert_array_equal(clusterwise_learn(x, a, cfg, workers=2).laplacian.l,
                                  clusterwise_learn(x, a, cfg).laplacian.l)


def _block_instance(seed):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(2, 5, size=int(rng.integers(2, 4)))
    n = int(sizes.sum())
    labels = rng.permutation(np.repeat(np.arange(sizes.size), sizes))
    assignment = ClusterAssignment(tuple(int(v) for v in labels))
    models = []
    for idx in assignment.member_lists:
        a = rng.normal(size=(len(idx), len(idx)))
        models.append(GraphModel(laplacian=random_laplacian(rng, len(idx)),
                                 covariance=KernelMatrix(a @ a.T + np.eye(len(idx)))))
    mask = rng.random(n) < 0.5
    for idx in assignment.member_lists:
        mask[idx[0]] = True
    params = StandardizationParams(rng.normal(size=n), rng.uniform(0.5, 2.0, size=n))
    values = params.means + params.stds * rng.normal(size=n)
    return assignment, models, GraphSignal(np.where(mask, values, np.nan), mask), params


@pytest.mark.parametrize('spec', [
    MethodSpec(kind=MethodKind.LAP_INT),
    MethodSpec(kind=MethodKind.GSP_LOWPASS, k=1),
    MethodSpec(kind=MethodKind.KRR_DIFF, mu=0.05, sigma2=1.5),
    MethodSpec(kind=MethodKind.KRR_COV, mu=0.05),
])
def test_clusterwise_equals_block_diagonal_whole_graph(spec):
    for seed in range(100):
        assignment, models, signal, params = _block_instance(seed)
        clustered = clusterwise_reconstruct(models, assignment, spec, signal, params)

        whole = GraphModel.from_blocks(models, assignment.member_lists, assignment.n)
        z = np.where(signal.mask, standardize(np.where(signal.mask, signal.values, 0.0), params), 0.0)
        expected = unstandardize(reconstruct_signal(spec, whole, GraphSignal(z, signal.mask)), params)

        np.testing.assert_allclose(clustered[~signal.mask], expected[~signal.mask], rtol=0, atol=1e-12)
        assert np.array_equal(clustered[signal.mask], signal.values[signal.mask])


def test_unobserved_cluster_is_named(rng):
    assignment = ClusterAssignment((0, 0, 1, 1))
    models = [GraphModel(laplacian=random_laplacian(rng, 2)) for _ in range(2)]
    signal = GraphSignal(np.array([1.0, 2.0, np.nan, np.nan]), np.array([True, True, False, False]))
    params = StandardizationParams(np.zeros(4), np.ones(4))

    with pytest.raises(ClusterUnobservedError) as info:
        clusterwise_reconstruct(models, assignment, MethodSpec(kind=MethodKind.LAP_INT), signal, params)
    assert info.value.cluster_id == 1
    assert info.value.nodes == [2, 3]
