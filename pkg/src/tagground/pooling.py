"""Temporal (audio) and phrase (text) pooling operators with exact gradients.

Audio pooling reduces per-frame probabilities s in [0,1]^T to one clip-level
value:

- ``mean``:     (1/T) sum s_t
- ``max``:      max_t s_t
- ``linsoft``:  sum s_t^2 / sum s_t   (self-weighted mean)
- ``expsoft``:  sum s_t e^{s_t} / sum e^{s_t}

Text pooling reduces per-phrase values to a sentence value (``mean``/``sum``).

All four audio kinds return values inside [min(s), max(s)]; an exactly
constant input returns that constant exactly (short-circuited, since float
summation would otherwise drift by an ulp). linsoft is intentionally NOT
monotone in individual entries: raising a small entry can lower the weighted
mean (e.g. [0,1] -> 1 but [0.1,1] -> 0.918), so only mean/max/expsoft carry a
monotonicity guarantee.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .validation import as_float_matrix, as_float_vector

AUDIO_POOL_KINDS = ("mean", "max", "linsoft", "expsoft")
TEXT_POOL_KINDS = ("mean", "sum")


def _check_audio_kind(kind: str) -> str:
    if kind not in AUDIO_POOL_KINDS:
        raise ConfigError(
            f"unknown audio pool kind {kind!r}, expected one of {AUDIO_POOL_KINDS}"
        )
    return kind


def _check_text_kind(kind: str) -> str:
    if kind not in TEXT_POOL_KINDS:
        raise ConfigError(
            f"unknown text pool kind {kind!r}, expected one of {TEXT_POOL_KINDS}"
        )
    return kind


def audio_pool(kind: str, s) -> float:
    _check_audio_kind(kind)
    s = as_float_vector(s, "pooling input")
    lo = float(s.min())
    hi = float(s.max())
    if lo == hi:
        return lo
    if kind == "mean":
        value = float(s.mean())
    elif kind == "max":
        value = hi
    elif kind == "linsoft":
        total = float(s.sum())
        value = 0.0 if total == 0.0 else float(s @ s) / total
    else:
        weights = np.exp(s)
        value = float(s @ weights) / float(weights.sum())
    # the formulas are convex combinations of the entries; clamp away any
    # last-ulp rounding excursion so the [min, max] bound holds exactly
    return min(max(value, lo), hi)


def audio_pool_grad(kind: str, s, upstream: float = 1.0) -> np.ndarray:
    _check_audio_kind(kind)
    s = as_float_vector(s, "pooling input")
    upstream = float(upstream)
    if kind == "mean":
        return np.full(s.shape, upstream / s.size)
    if kind == "max":
        grad = np.zeros_like(s)
        grad[int(np.argmax(s))] = upstream  # first argmax on ties
        return grad
    if kind == "linsoft":
        total = float(s.sum())
        if total == 0.0:
            return np.zeros_like(s)
        value = float(s @ s) / total
        return upstream * (2.0 * s - value) / total
    weights = np.exp(s)
    total = float(weights.sum())
    value = float(s @ weights) / total
    return upstream * weights * (1.0 + s - value) / total


def text_pool(kind: str, s_cp) -> float:
    _check_text_kind(kind)
    s_cp = as_float_vector(s_cp, "text pooling input")
    return float(s_cp.mean()) if kind == "mean" else float(s_cp.sum())


def text_pool_grad(kind: str, s_cp, upstream: float = 1.0) -> np.ndarray:
    _check_text_kind(kind)
    s_cp = as_float_vector(s_cp, "text pooling input")
    upstream = float(upstream)
    if kind == "mean":
        return np.full(s_cp.shape, upstream / s_cp.size)
    return np.full(s_cp.shape, upstream)


def pool_columns(kind: str, s: np.ndarray) -> np.ndarray:
    """Audio-pool every column of a T x N matrix at once (training fast path).

    Matches ``audio_pool`` per column up to float summation order; the 1-D op
    remains the reference implementation.
    """
    _check_audio_kind(kind)
    s = as_float_matrix(s, "pooling input")
    if kind == "mean":
        return s.mean(axis=0)
    if kind == "max":
        return s.max(axis=0)
    if kind == "linsoft":
        totals = s.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(totals == 0.0, 0.0, (s * s).sum(axis=0) / totals)
        return values
    weights = np.exp(s)
    return (s * weights).sum(axis=0) / weights.sum(axis=0)


def pool_columns_grad(kind: str, s: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``pool_columns`` w.r.t. each entry, times per-column upstream."""
    _check_audio_kind(kind)
    s = as_float_matrix(s, "pooling input")
    upstream = np.asarray(upstream, dtype=np.float64)
    if kind == "mean":
        return np.broadcast_to(upstream / s.shape[0], s.shape).copy()
    if kind == "max":
        grad = np.zeros_like(s)
        grad[np.argmax(s, axis=0), np.arange(s.shape[1])] = upstream
        return grad
    if kind == "linsoft":
        totals = s.sum(axis=0)
        safe = np.where(totals == 0.0, 1.0, totals)
        values = (s * s).sum(axis=0) / safe
        grad = upstream * (2.0 * s - values) / safe
        return np.where(totals == 0.0, 0.0, grad)
    weights = np.exp(s)
    totals = weights.sum(axis=0)
    values = (s * weights).sum(axis=0) / totals
    return upstream * weights * (1.0 + s - values) / totals
