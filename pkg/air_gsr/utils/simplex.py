import numpy as np


def project_simplex(y: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``{x : x >= 0, sum(x) = total}``.

    Sort-based method: find the largest k whose threshold keeps the k biggest
    entries positive, then shift and clip.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return y.copy()
    if total <= 0:
        raise ValueError('Simplex total must be positive')

    u = np.sort(y)[::-1]
    thresholds = (np.cumsum(u) - total) / np.arange(1, y.size + 1)
    k = np.flatnonzero(thresholds < u)[-1]
    x = np.clip(y - thresholds[k], 0.0, None)

    # rescale the surviving support so the equality holds to rounding
    s = x.sum()
    if s > 0:
        x *= total / s
    return x
