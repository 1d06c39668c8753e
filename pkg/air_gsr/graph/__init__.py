from .laplacian import LaplacianMatrix, WeightMatrix, SamplingPattern, GraphSignal, eigendecompose
from .learning import SmoothLearnConfig, learn_graph
from .covariance import GlassoConfig, graphical_lasso, empirical_covariance

__all__ = [
    'LaplacianMatrix', 'WeightMatrix', 'SamplingPattern', 'GraphSignal', 'eigendecompose',
    'SmoothLearnConfig', 'learn_graph',
    'GlassoConfig', 'graphical_lasso', 'empirical_covariance',
]
