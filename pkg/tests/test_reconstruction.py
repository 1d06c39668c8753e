import numpy as np
import pytest
import scipy.linalg
from pydantic import ValidationError
from sklearn.kernel_ridge import KernelRidge

from air_gsr.errors import ComputationError, ConfigError, DataError, DimensionMismatchError
from air_gsr.graph.laplacian import GraphSignal, SamplingPattern, WeightMatrix, eigendecompose, laplacian_from_weights
from air_gsr.reconstruction import (
    GraphModel,
    KernelMatrix,
    MethodKind,
    MethodSpec,
    diffusion_kernel,
    fit_gsp,
    fit_krr,
    fit_lap_int,
    fit_method,
    reconstruct,
    reconstruct_signal,
)

from conftest import random_laplacian


def _random_pattern(rng, n):
    m = int(rng.integers(1, n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, m, replace=False)] = True
    return SamplingPattern.from_mask(mask)


def _two_components():
    w = np.zeros((4, 4))
    w[0, 1] = w[2, 3] = 1.0
    return laplacian_from_weights(WeightMatrix(w))


def _lap_int_oracle(l, p, x_m):  # noqa: E741
    """Minimize x^T L x with x_M fixed through the full KKT system."""
    n, m = l.n, len(p.observed)
    phi = p.sampling_matrix()
    kkt = np.block([[2.0 * l.l, phi.T], [phi, np.zeros((m, m))]])
    sol = np.linalg.solve(kkt, np.concatenate([np.zeros(n), x_m]))
    return sol[:n][p.u_idx]


def _gsp_oracle(l, p, k, x_m):  # noqa: E741
    """GDFT pipeline: least-squares K-sparse spectrum, then the inverse transform."""
    u = np.linalg.eigh(l.l)[1]
    coeffs = np.linalg.lstsq(u[p.m_idx, :k], x_m, rcond=None)[0]
    return (u[:, :k] @ coeffs)[p.u_idx]


def _oracle_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(3, 9))
        l = random_laplacian(rng, n)  # noqa: E741
        p = _random_pattern(rng, n)
        yield rng, l, p, rng.normal(size=len(p.observed))


def _check_oracles(count):
    for rng, l, p, x_m in _oracle_instances(count):
        np.testing.assert_allclose(reconstruct(fit_lap_int(l, p), x_m), _lap_int_oracle(l, p, x_m), atol=1e-8)

        eig = eigendecompose(l)
        k = int(rng.integers(1, len(p.observed) + 1))
        r = fit_gsp(eig, p, k)
        if not r.flags and np.linalg.cond(eig.eigenvectors[np.ix_(p.m_idx, np.arange(k))]) < 1e6:
            np.testing.assert_allclose(reconstruct(r, x_m), _gsp_oracle(l, p, k, x_m), atol=1e-8)

        mu = float(10 ** rng.uniform(-3, 0))
        kernel = diffusion_kernel(eig, float(rng.uniform(0.1, 3.0)))
        model = KernelRidge(alpha=mu * len(p.observed), kernel='precomputed')
        model.fit(kernel.k[np.ix_(p.m_idx, p.m_idx)], x_m)
        expected = model.predict(kernel.k[np.ix_(p.u_idx, p.m_idx)])
        np.testing.assert_allclose(reconstruct(fit_krr(kernel, p, mu), x_m), expected, atol=1e-8)


def test_linear_forms_match_native_formulations():
    _check_oracles(60)


@pytest.mark.slow
def test_linear_forms_match_native_formulations_full_suite():
    _check_oracles(500)


def test_bandlimited_signals_recovered_exactly():
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(4, 12))
        eig = eigendecompose(random_laplacian(rng, n))
        k = int(rng.integers(1, n))
        p = _random_pattern(rng, n)
        if len(p.observed) < k:
            continue
        x = eig.eigenvectors[:, :k] @ rng.normal(size=k)
        r = fit_gsp(eig, p, k)
        if np.linalg.matrix_rank(eig.eigenvectors[np.ix_(p.m_idx, np.arange(k))]) < k:
            continue
        np.testing.assert_allclose(reconstruct(r, x[p.m_idx]), x[p.u_idx], atol=1e-6)
        checked += 1
    assert checked > 50


def test_diffusion_kernel_is_matrix_exponential():
    rng = np.random.default_rng(2)
    for _ in range(100):
        l = random_laplacian(rng, int(rng.integers(2, 11)))  # noqa: E741
        sigma2 = float(rng.uniform(0.01, 5.0))
        expected = scipy.linalg.expm(-sigma2 * l.l / 2.0)
        np.testing.assert_allclose(diffusion_kernel(eigendecompose(l), sigma2).k, expected, atol=1e-8)


def test_diffusion_kernel_two_nodes():
    l = laplacian_from_weights(WeightMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])))  # noqa: E741
    decay = np.exp(-2.0)
    expected = 0.5 * np.array([[1 + decay, 1 - decay], [1 - decay, 1 + decay]])
    np.testing.assert_allclose(diffusion_kernel(eigendecompose(l), 2.0).k, expected, atol=1e-12)


def test_diffusion_kernel_zero_width_is_identity(rng):
    k = diffusion_kernel(eigendecompose(random_laplacian(rng, 5)), 0.0).k
    assert np.array_equal(k, np.eye(5))
    with pytest.raises(ConfigError):
        diffusion_kernel(eigendecompose(random_laplacian(rng, 5)), -1.0)


def test_lap_int_rows_are_convex_weights(rng):
    l = random_laplacian(rng, 7)  # noqa: E741
    r = fit_lap_int(l, SamplingPattern.from_mask([True, False, True, True, False, False, True]))
    assert (r.beta >= -1e-12).all()
    np.testing.assert_allclose(r.beta.sum(axis=1), 1.0, atol=1e-10)


def test_lap_int_disconnected_unobserved_is_regularized():
    r = fit_lap_int(_two_components(), SamplingPattern.from_mask([True, False, False, False]))
    assert r.flags == ('regularized',)
    assert np.isfinite(r.beta).all()


def test_gsp_rank_deficient_is_flagged():
    eig = eigendecompose(_two_components())
    r = fit_gsp(eig, SamplingPattern.from_mask([True, True, False, False]), 2)
    assert 'rank-deficient' in r.flags

    with pytest.raises(ComputationError):
        fit_gsp(eig, SamplingPattern.from_mask([True, False, False, False]), 2)


def test_krr_interpolates_as_ridge_vanishes(rng):
    kernel = diffusion_kernel(eigendecompose(random_laplacian(rng, 5)), 1.0)
    p = SamplingPattern.from_mask([True, True, True, False, False])
    x_m = rng.normal(size=3)
    small = reconstruct(fit_krr(kernel, p, 1e-9), x_m)
    k = kernel.k
    exact = k[np.ix_(p.u_idx, p.m_idx)] @ np.linalg.solve(k[np.ix_(p.m_idx, p.m_idx)], x_m)
    np.testing.assert_allclose(small, exact, atol=1e-6)

    with pytest.raises(ConfigError):
        fit_krr(kernel, p, 0.0)


def test_reconstruct_batches(rng):
    l = random_laplacian(rng, 6)  # noqa: E741
    r = fit_lap_int(l, SamplingPattern.from_mask([True, False, True, True, False, True]))
    batch = rng.normal(size=(5, 4))
    np.testing.assert_allclose(reconstruct(r, batch), np.vstack([reconstruct(r, row) for row in batch]))

    with pytest.raises(DimensionMismatchError):
        reconstruct(r, np.ones(3))


class TestReconstructSignal:

    @pytest.fixture
    def model(self, rng):
        return GraphModel(laplacian=random_laplacian(rng, 6), covariance=KernelMatrix(np.eye(6) + 0.5))

    @pytest.mark.parametrize('spec', [
        MethodSpec(kind=MethodKind.LAP_INT),
        MethodSpec(kind=MethodKind.GSP_LOWPASS, k=2),
        MethodSpec(kind=MethodKind.KRR_DIFF, mu=0.01, sigma2=1.0),
        MethodSpec(kind=MethodKind.KRR_COV, mu=0.01),
    ])
    def test_observed_entries_unchanged(self, model, rng, spec):
        values = rng.normal(size=6)
        mask = np.array([True, False, True, True, False, True])
        out = reconstruct_signal(spec, model, GraphSignal(np.where(mask, values, np.nan), mask))

        assert np.array_equal(out[mask], values[mask])
        assert np.isfinite(out).all()

    def test_complete_signal_echoed(self, model, rng):
        values = rng.normal(size=6)
        out = reconstruct_signal(MethodSpec(kind=MethodKind.LAP_INT), model, GraphSignal(values))
        assert np.array_equal(out, values)

    def test_all_missing(self, model):
        with pytest.raises(DataError):
            reconstruct_signal(MethodSpec(kind=MethodKind.LAP_INT), model,
                               GraphSignal(np.zeros(6), np.zeros(6, dtype=bool)))

    def test_size_mismatch(self, model):
        with pytest.raises(DimensionMismatchError):
            reconstruct_signal(MethodSpec(kind=MethodKind.LAP_INT), model, GraphSignal(np.zeros(5)))


def test_method_needs_its_model_part(rng):
    p = SamplingPattern.from_mask([True, False, True])
    with pytest.raises(ConfigError):
        fit_method(MethodSpec(kind=MethodKind.KRR_COV, mu=0.1), GraphModel(laplacian=random_laplacian(rng, 3)), p)
    with pytest.raises(ConfigError):
        fit_method(MethodSpec(kind=MethodKind.LAP_INT), GraphModel(covariance=KernelMatrix(np.eye(3))), p)


@pytest.mark.parametrize('kwargs', [
    {'kind': 'gsp'},
    {'kind': 'krr-diff', 'mu': 0.1},
    {'kind': 'krr-cov'},
    {'kind': 'krr-cov', 'mu': -1.0},
    {'kind': 'unknown'},
])
def test_method_spec_validation(kwargs):
    with pytest.raises(ValidationError):
        MethodSpec(**kwargs)
