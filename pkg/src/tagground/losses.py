"""Training objectives with analytic gradients.

- ``ranking_loss``: sentence-level max-margin ranking over a B x B grid of
  clip-sentence similarities; every off-diagonal pair contributes two hinges
  (wrong sentence for the clip, wrong clip for the sentence).
- ``bce_loss``: phrase-level clip BCE over sampled positive/negative phrases.
- ``selfsup_loss``: frame-level BCE against teacher pseudo labels plus
  clip-level BCE against refined labels, the gradient flowing through the
  audio pooling of the clip term.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .pooling import pool_columns, pool_columns_grad
from .validation import as_float_matrix, as_float_vector, check_same_length

CLAMP_EPS = 1e-7


def ranking_loss(grid, margin: float = 0.2):
    """Return (loss, gradient) of the max-margin ranking objective.

    loss = (1/B) sum_i sum_{j != i} [max(0, m + g[i,j] - g[i,i])
                                     + max(0, m + g[j,i] - g[i,i])]
    """
    grid = as_float_matrix(grid, "similarity grid")
    if grid.shape[0] != grid.shape[1]:
        raise DataError(f"similarity grid must be square, got {grid.shape}")
    b = grid.shape[0]
    if b < 2:
        raise DataError("ranking loss needs a batch of at least 2 clips")
    if margin < 0:
        raise DataError(f"margin must be >= 0, got {margin}")
    diag = np.diag(grid)
    off = ~np.eye(b, dtype=bool)
    text_arg = margin + grid - diag[:, None]
    audio_arg = margin + grid.T - diag[:, None]
    text_active = (text_arg > 0.0) & off
    audio_active = (audio_arg > 0.0) & off
    loss = (text_arg[text_active].sum() + audio_arg[audio_active].sum()) / b

    grad = np.zeros_like(grid)
    grad += text_active / b
    grad += audio_active.T / b
    hits = text_active.sum(axis=1) + audio_active.sum(axis=1)
    grad[np.diag_indices(b)] -= hits / b
    return float(loss), grad


def bce_loss(s_cp, y):
    """Mean binary cross entropy; probabilities clamped to [eps, 1-eps]."""
    s_cp = as_float_vector(s_cp, "s_cp")
    y = as_float_vector(y, "y")
    check_same_length(s_cp, y, "s_cp", "y")
    clamped = np.clip(s_cp, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -np.mean(y * np.log(clamped) + (1.0 - y) * np.log1p(-clamped))
    grad = (clamped - y) / (clamped * (1.0 - clamped)) / s_cp.size
    return float(loss), grad


def selfsup_loss(s_fp, y_self, y_refined, pool: str):
    """Combined strong (frame) + weak (clip) objective for student training.

    loss = mean_{t,n} BCE(s_fp[t,n], y_self[t,n])
         + mean_n BCE(audio_pool(s_fp[:,n]), y_refined[n])
    """
    s_fp = as_float_matrix(s_fp, "s_fp")
    y_self = as_float_matrix(y_self, "y_self")
    y_refined = as_float_vector(y_refined, "y_refined")
    if s_fp.shape != y_self.shape:
        raise DataError(
            f"s_fp and y_self shapes differ: {s_fp.shape} vs {y_self.shape}"
        )
    if y_refined.size != s_fp.shape[1]:
        raise DataError(
            f"y_refined length {y_refined.size} does not match {s_fp.shape[1]} phrases"
        )
    strong_loss, strong_grad_flat = bce_loss(s_fp.ravel(), y_self.ravel())
    strong_grad = strong_grad_flat.reshape(s_fp.shape)

    s_cp = pool_columns(pool, s_fp)
    weak_loss, weak_grad_cp = bce_loss(s_cp, y_refined)
    weak_grad = pool_columns_grad(pool, s_fp, weak_grad_cp)
    return strong_loss + weak_loss, strong_grad + weak_grad
