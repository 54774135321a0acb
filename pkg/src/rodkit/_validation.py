"""Input validation helpers shared by the estimators and free functions."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, DimensionError


def check_positive(name, value, strict=True):
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        cmp = ">" if strict else ">="
        raise ConfigError(f"{name} must be {cmp} 0, got {value!r}")
    return value


def check_count(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_array(x, name="array", ndim=None, shape=None, complex_ok=False, dtype=None):
    """Convert ``x`` to an ndarray and check rank, shape and finiteness.

    ``shape`` may contain ``None`` entries for unconstrained axes.
    """
    arr = np.asarray(x)
    if not complex_ok and np.iscomplexobj(arr):
        raise DimensionError(f"{name} must be real-valued")
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype.kind not in "fc":
        arr = arr.astype(np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and got != want for got, want in zip(arr.shape, shape)
        ):
            raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise DimensionError(
            f"{names[0]} shape {np.shape(a)} does not match {names[1]} shape {np.shape(b)}"
        )


def as_triple(v, name="value"):
    if np.isscalar(v):
        return (int(v),) * 3
    t = tuple(int(e) for e in v)
    if len(t) != 3:
        raise ConfigError(f"{name} needs 3 entries (time, range, azimuth), got {v!r}")
    return t
