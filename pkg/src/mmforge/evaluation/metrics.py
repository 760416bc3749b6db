"""Point-forecast error metrics."""

import numpy as np
import numpy.typing as npt

from mmforge.exceptions import DataError, DimensionError
from mmforge.types import FloatArray


def _flatten_pair(
    y: npt.ArrayLike, y_hat: npt.ArrayLike
) -> tuple[FloatArray, FloatArray]:
    a = np.asarray(y, dtype=np.float64).ravel()
    b = np.asarray(y_hat, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DimensionError("metric", a.shape, b.shape)
    if a.size == 0:
        raise DimensionError("metric", a.shape, detail="no points")
    return a, b


def mae(y: npt.ArrayLike, y_hat: npt.ArrayLike) -> float:
    """Mean absolute error.

    Returns:
        ``mean(|y - y_hat|)``.
    """
    a, b = _flatten_pair(y, y_hat)
    return float(np.mean(np.abs(a - b)))


def mse(y: npt.ArrayLike, y_hat: npt.ArrayLike) -> float:
    """Mean squared error.

    Returns:
        ``mean((y - y_hat)^2)``.
    """
    a, b = _flatten_pair(y, y_hat)
    d = a - b
    return float(np.mean(d * d))


def mape(
    y: npt.ArrayLike, y_hat: npt.ArrayLike, eps: float = 1e-6
) -> tuple[float, int]:
    """Mean absolute percentage error over targets with ``|y| >= eps``.

    Returns:
        The percentage and the number of points left out.

    Raises:
        DataError: If every target is below ``eps``.
        ValueError: If ``eps`` is not positive.
    """
    if eps <= 0.0:
        raise ValueError(f"mape eps must be positive: {eps}")
    a, b = _flatten_pair(y, y_hat)
    kept = np.abs(a) >= eps
    n_excluded = int(a.size - np.count_nonzero(kept))
    if n_excluded == a.size:
        raise DataError(f"all {a.size} targets are below mape eps {eps}")
    ratio = np.abs(a[kept] - b[kept]) / np.abs(a[kept])
    return float(np.mean(ratio) * 100.0), n_excluded
