"""air-gsr exception hierarchy."""


class AirGsrError(Exception):
    """Base class for every error raised by air-gsr."""

    exit_code = 1


class ConfigError(AirGsrError, ValueError):
    """Invalid run configuration, flags or hyperparameters."""

    exit_code = 2


class DataError(AirGsrError, ValueError):
    """Malformed or unusable input data.

    Attributes:
        line (int): 1-based line of the offending CSV cell, if known.
        column (int): 1-based column of the offending CSV cell, if known.
    """

    def __init__(self, message: str, line: int = None, column: int = None):
        if line is not None:
            message = f'{message} (line {line}, column {column})'
        super().__init__(message)
        self.line = line
        self.column = column


class DimensionMismatchError(AirGsrError, ValueError):
    """Array shapes do not agree."""


class ComputationError(AirGsrError):
    """A numerical routine failed (solve, decomposition, no usable result)."""


class ClusterUnobservedError(ComputationError):
    """A cluster holds unobserved nodes but no observed one.

    Attributes:
        cluster_id (int): The cluster that cannot be reconstructed.
        nodes (list[int]): The unobserved nodes of that cluster.
    """

    def __init__(self, cluster_id: int, nodes):
        super().__init__(
            f'Cluster {cluster_id} has no observed node; nodes {list(nodes)} cannot be reconstructed')
        self.cluster_id = cluster_id
        self.nodes = list(nodes)
