"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array


def as_points(X, *, min_samples: int = 1, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array of shape (n, d).

    Accepts a :class:`~rmdgraph.dataset.DataSet`, any array-like, or a 1-D
    vector (interpreted as n one-dimensional points).
    """
    points = getattr(X, "points", X)
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr = check_array(arr, dtype=np.float64, ensure_min_samples=min_samples,
                      input_name=name)
    return arr


def as_labels(y, n: int | None = None, *, allow_unlabeled: bool = False) -> np.ndarray:
    """Validate an integer label vector; ``-1`` marks unlabeled when allowed."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("labels must be integers")
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64, copy=False)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"expected {n} labels, got {arr.shape[0]}")
    lo = -1 if allow_unlabeled else 0
    if arr.size and arr.min() < lo:
        raise ValueError(f"labels must be >= {lo}")
    return arr


def check_seed(seed) -> np.random.Generator:
    """Turn ``None``, an int, or a Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"seed must be None, an int or a numpy Generator, got {type(seed).__name__}")


def check_positive_int(value, name: str, *, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value
