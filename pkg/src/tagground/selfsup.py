"""Teacher-based self-supervision: pseudo labels and label refinement.

A frozen, fully trained phrase-level model (the teacher) predicts frame-level
probabilities for the student's sampled phrases; pooling those gives a
clip-level pseudo label, and the refined label is the elementwise max of the
weak label and the pseudo label. The student then trains on the combined
frame + clip objective (``losses.selfsup_loss``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import ModelParams, infer, load_checkpoint
from .pooling import pool_columns
from .validation import as_float_vector, check_same_length


@dataclass(frozen=True)
class PseudoLabels:
    y_self_frames: np.ndarray  # T x N
    y_self_clip: np.ndarray  # N


@dataclass(frozen=True)
class Teacher:
    """Frozen teacher parameters plus the pooling kind they were trained with."""

    params: ModelParams
    audio_pool: str


def load_teacher(path) -> Teacher:
    """Load a phrase-mode checkpoint as a teacher."""
    params, header = load_checkpoint(path)
    config = header.get("config", {})
    if config.get("mode") != "phrase":
        raise DataError(
            f"teacher checkpoint must be trained in phrase mode, got "
            f"{config.get('mode')!r}"
        )
    return Teacher(params=params, audio_pool=config.get("audio_pool", "linsoft"))


def teacher_predict(teacher: ModelParams, clip, phrases, pool: str) -> PseudoLabels:
    """Frame pseudo labels via the teacher's inference, clip labels via pooling."""
    phrases = list(phrases)
    if not phrases:
        raise DataError("teacher_predict needs at least one phrase")
    frames = infer(teacher, clip.frames, phrases)
    return PseudoLabels(
        y_self_frames=frames, y_self_clip=pool_columns(pool, frames)
    )


def refine_labels(y, y_self_clip) -> np.ndarray:
    """Elementwise max: positives stay 1, negatives absorb the teacher's belief."""
    y = as_float_vector(y, "y")
    y_self_clip = as_float_vector(y_self_clip, "y_self_clip")
    check_same_length(y, y_self_clip, "y", "y_self_clip")
    return np.maximum(y, y_self_clip)
