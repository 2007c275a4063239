"""Input-validation helpers shared across the package.

All helpers raise :class:`~tagground.errors.DataError` (for malformed values)
or :class:`~tagground.errors.ConfigError` (for bad knobs) with messages that
name the offending argument, and return canonicalized numpy arrays so callers
can rely on dtype/shape afterwards.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError


def as_float_vector(x, name: str, min_len: int = 1) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DataError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if v.size < min_len:
        raise DataError(f"{name} must have at least {min_len} element(s)")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite values")
    return v


def as_float_matrix(x, name: str) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite values")
    return m


def check_similarity_matrix(values, name: str = "similarity matrix") -> np.ndarray:
    m = as_float_matrix(values, name)
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise DataError(f"{name} entries must lie in [0, 1]")
    return m


def check_same_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise DataError(
            f"{name_a} and {name_b} must have equal length, got {len(a)} and {len(b)}"
        )


def check_odd_window(window: int) -> int:
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be an odd integer >= 1, got {window}")
    return window


def check_positive(value, name: str):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def check_in_open_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie strictly between 0 and 1, got {value}")
    return value
