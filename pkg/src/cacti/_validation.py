"""Input validation helpers shared by the estimators and functional API."""

import numbers

import numpy as np


def check_cube(f, name="datacube", allow_2d=False):
    """Return ``f`` as a finite float64 array of shape (rows, cols, frames).

    With ``allow_2d`` a 2D array is promoted to a single-frame cube.
    """
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim == 2 and allow_2d:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3D (rows, cols, frames), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_snapshot(g, name="snapshot"):
    arr = np.asarray(g, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D (rows, cols), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed, name="seed"):
    if seed is None:
        raise ValueError(f"{name} is required; all randomness must be seeded explicitly")
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"{name} must be an unsigned integer, got {seed!r}")
    return int(seed)


def check_shape_match(actual, expected, what):
    if tuple(actual) != tuple(expected):
        raise ValueError(f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}")
