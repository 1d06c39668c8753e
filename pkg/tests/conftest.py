import numpy as np
import pandas as pd
import pytest

from air_gsr.graph.laplacian import LaplacianMatrix, WeightMatrix, laplacian_from_weights


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_laplacian(rng, n, density=0.6) -> LaplacianMatrix:
    """Connected random graph: a spanning path plus random extra edges."""
    w = np.triu(rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < density), k=1)
    for i in range(n - 1):
        w[i, i + 1] = max(w[i, i + 1], rng.uniform(0.1, 2.0))
    return laplacian_from_weights(WeightMatrix(w))


def path_laplacian(n) -> LaplacianMatrix:
    w = np.zeros((n, n))
    for i in range(n - 1):
        w[i, i + 1] = 1.0
    return laplacian_from_weights(WeightMatrix(w))


def ring_data(rng, n, p, noise=0.1) -> np.ndarray:
    """P x N signals varying smoothly around a ring of N stations."""
    theta = 2 * np.pi * np.arange(n) / n
    factors = rng.normal(size=(p, 3)) * np.array([3.0, 3.0, 5.0])
    x = factors[:, [0]] * np.cos(theta) + factors[:, [1]] * np.sin(theta) + factors[:, [2]]
    return x + noise * rng.normal(size=(p, n)) + 40.0


def common_factor_data(rng, n, p, amplitude=30.0, noise=1.0) -> np.ndarray:
    """P x N readings sharing one strong common factor."""
    factor = amplitude * rng.normal(size=(p, 1))
    loadings = 1.0 + 0.1 * rng.normal(size=(1, n))
    return 50.0 + factor * loadings + noise * rng.normal(size=(p, n))


def two_group_data(rng, p=60, sizes=(3, 3), noise=0.3) -> np.ndarray:
    """Two station groups, each following its own factor."""
    cols = []
    for size in sizes:
        factor = 10.0 * rng.normal(size=(p, 1))
        cols.append(factor + noise * rng.normal(size=(p, size)) + rng.uniform(20, 60))
    return np.hstack(cols)


def write_csv(path, values, node_ids=None, start='2019-01-01', missing=()):
    """Write a station CSV; ``missing`` lists (row, col) cells left empty."""
    p, n = values.shape
    node_ids = node_ids or [f'st{j:02d}' for j in range(n)]
    frame = pd.DataFrame(values, columns=node_ids).astype(object)
    for row, col in missing:
        frame.iat[row, col] = ''
    frame.insert(0, 'timestamp', [t.isoformat() for t in pd.date_range(start, periods=p, freq='8h')])
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def group_csv(tmp_path, rng):
    return write_csv(tmp_path / 'stations.csv', two_group_data(rng))
