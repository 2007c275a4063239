"""Shared domain types.

A dataset is a list of :class:`ClipRecord`. Each record couples a clip's frame
features with its caption phrases (the weak labels); frame-level strong labels
are carried only for evaluation and live in a sidecar file on disk, so the
training path never sees them unless a caller loads them explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import Rng
from .validation import as_float_matrix


@dataclass(frozen=True)
class FrameSequence:
    """Frame features of one audio clip: a T x D float matrix plus the hop."""

    clip_id: str
    features: np.ndarray
    hop_seconds: float = 0.01

    def __post_init__(self):
        object.__setattr__(
            self, "features", as_float_matrix(self.features, "features")
        )
        if self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise DataError(
                f"clip {self.clip_id!r}: features must be at least 1x1, "
                f"got {self.features.shape}"
            )
        if not self.hop_seconds > 0:
            raise DataError(f"clip {self.clip_id!r}: hop_seconds must be > 0")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames * self.hop_seconds


@dataclass(frozen=True)
class PhraseQuery:
    """One caption phrase: raw text plus pre-tokenized word ids.

    ``class_id`` is the synthetic generator's hidden ground-truth class. It is
    never serialized into dataset files and must not influence training; it
    exists so that test oracles can measure false-negative rates.
    """

    text: str
    tokens: tuple
    class_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.text:
            raise DataError("phrase text must be non-empty")
        if not self.tokens:
            raise DataError(f"phrase {self.text!r}: tokens must be non-empty")
        if any(t < 0 for t in self.tokens):
            raise DataError(f"phrase {self.text!r}: token ids must be >= 0")


@dataclass(frozen=True)
class ClipRecord:
    """A clip with its caption; strong labels are evaluation-only.

    ``strong_labels`` holds (phrase_index, onset_s, offset_s) triples. An empty
    tuple means the sidecar was absent or deliberately not loaded.
    """

    frames: FrameSequence
    caption: tuple
    strong_labels: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "caption", tuple(self.caption))
        object.__setattr__(
            self,
            "strong_labels",
            tuple((int(i), float(a), float(b)) for i, a, b in self.strong_labels),
        )
        if not self.caption:
            raise DataError(f"clip {self.clip_id!r}: caption must be non-empty")
        duration = self.frames.duration_seconds
        for index, onset, offset in self.strong_labels:
            if not 0 <= index < len(self.caption):
                raise DataError(
                    f"clip {self.clip_id!r}: label phrase_index {index} out of range"
                )
            if not (0.0 <= onset < offset <= duration + 1e-9):
                raise DataError(
                    f"clip {self.clip_id!r}: bad label interval ({onset}, {offset})"
                )

    @property
    def clip_id(self) -> str:
        return self.frames.clip_id

    def events_for_phrase(self, phrase_index: int) -> list:
        """Sorted (onset, offset) segments labeled for one caption phrase."""
        segments = [
            (onset, offset)
            for index, onset, offset in self.strong_labels
            if index == phrase_index
        ]
        segments.sort()
        return segments


def split_dataset(records, validation_count: int, rng: Rng):
    """Shuffle-split records into (train, validation), deterministic per seed."""
    records = list(records)
    validation_count = int(validation_count)
    if not 0 < validation_count < len(records):
        raise DataError(
            f"validation_count must be in (0, {len(records)}), got {validation_count}"
        )
    order = rng.generator.permutation(len(records))
    validation = [records[i] for i in order[:validation_count]]
    train = [records[i] for i in order[validation_count:]]
    return train, validation
