import numpy as np
import pytest

from air_gsr.errors import ComputationError, ConfigError, DataError
from air_gsr.graph.covariance import GlassoConfig, empirical_covariance, graphical_lasso, precision_to_adjacency
from air_gsr.graph.laplacian import edge_set


def _sample_covariance(rng, n, p=60):
    mix = rng.normal(size=(n, n)) * 0.4 + np.eye(n)
    x = rng.normal(size=(p, n)) @ mix
    return empirical_covariance((x - x.mean(axis=0)) / x.std(axis=0, ddof=1))


def test_empirical_covariance(rng):
    x = rng.normal(size=(30, 4))
    np.testing.assert_allclose(empirical_covariance(x), np.cov(x, rowvar=False), atol=1e-14)
    assert empirical_covariance(x[:, :1]).shape == (1, 1)

    with pytest.raises(DataError):
        empirical_covariance(x[:1])


def test_diagonal_input_is_analytic():
    s = np.diag([0.5, 1.0, 2.0, 4.0])
    lam = 0.3
    est = graphical_lasso(s, lam)

    assert est.converged
    np.testing.assert_allclose(est.theta, np.diag(1.0 / (np.diag(s) + lam)), atol=1e-10)


@pytest.mark.parametrize('n', [2, 4, 6])
def test_zero_penalty_is_inverse(rng, n):
    s = _sample_covariance(rng, n)
    est = graphical_lasso(s, 0.0)
    np.testing.assert_allclose(est.theta, np.linalg.inv(s), atol=1e-5)


def test_optimality_conditions(rng):
    s = _sample_covariance(rng, 6)
    lam = 0.1
    est = graphical_lasso(s, lam, cfg=GlassoConfig(tol=1e-9))
    assert est.converged

    off = ~np.eye(6, dtype=bool)
    gap = est.sigma - s
    assert np.abs(gap[off]).max() <= lam * (1 + 1e-3)
    support = off & (np.abs(est.theta) > 1e-6)
    np.testing.assert_allclose(gap[support], lam * np.sign(est.theta[support]), atol=1e-4)
    np.testing.assert_allclose(est.sigma @ est.theta, np.eye(6), atol=1e-4)


def test_edges_shrink_with_penalty(rng):
    s = _sample_covariance(rng, 6)
    counts = [len(edge_set(precision_to_adjacency(graphical_lasso(s, lam).theta)))
              for lam in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] == 0


def test_dual_objective_nonincreasing(rng):
    trace = graphical_lasso(_sample_covariance(rng, 5), 0.05).objective_trace
    for a, b in zip(trace, trace[1:]):
        assert b <= a + 1e-8


def test_errors():
    with pytest.raises(ConfigError):
        graphical_lasso(np.eye(2), -0.1)
    with pytest.raises(ComputationError):
        graphical_lasso(np.array([[1.0, 2.0], [2.0, 1.0]]), 0.0)
    with pytest.raises(DataError):
        graphical_lasso(np.array([[1.0, 0.5], [0.0, 1.0]]), 0.1)


def test_non_convergence_is_reported(rng):
    est = graphical_lasso(_sample_covariance(rng, 6), 0.05, max_iters=1, tol=1e-16)
    assert not est.converged
    assert np.isfinite(est.theta).all()


def test_precision_to_adjacency():
    theta = np.array([[2.0, -0.5, 1e-6], [-0.5, 2.0, 0.3], [1e-6, 0.3, 2.0]])
    w = precision_to_adjacency(theta, tau=1e-4).w
    np.testing.assert_array_equal(w, [[0.0, 0.5, 0.0], [0.5, 0.0, 0.3], [0.0, 0.3, 0.0]])
