"""Small input-checking helpers shared by the estimators and functional API."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import NonFiniteInput


def check_width(width, *, minimum: int = 2, name: str = "width") -> int:
    if isinstance(width, bool) or not isinstance(width, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(width).__name__}")
    width = int(width)
    if width < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {width}")
    return width


def check_positive_int(value, name: str, *, allow_zero: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {value}")
    return value


def check_fraction(fraction: float) -> float:
    fraction = float(fraction)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    return fraction


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_features(x, n_features: int = 8) -> np.ndarray:
    """Return a 2-D float64 array of finite feature rows."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_features:
        raise ValueError(f"expected feature rows of length {n_features}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("features contain NaN or infinity")
    return arr


def check_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {arr.shape}")
    if len(arr) == 0:
        raise ValueError("points must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("points contain NaN or infinity")
    return arr


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
