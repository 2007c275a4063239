"""Synthetic dataset generator with hidden ground truth.

Each clip is Gaussian background noise; every injected event adds its class's
signature (a fixed +-1 pattern over a random quarter of the feature dims) to
the frames it spans, so presence is linearly detectable per frame and any
grounding failure is attributable to the weak-supervision machinery rather
than encoder capacity.

Captions carry one phrase variant per event class present. Variants of one
class share an embedding prototype (see the oracle embedder) and the class's
two token ids, adding a single variant-specific token, the way paraphrases
share most of their wording; sampling any variant as a negative is what makes
random sampling hit false negatives. Class frequencies follow a Zipf(1.0)
skew, and the phrase inventory follows the same skew: frequent classes own
many paraphrases, rare classes as few as one, the way caption corpora look.
Frame-level (onset, offset) labels go only into the sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .io import POOL_BASENAME, save_dataset, save_strong_labels
from .rng import Rng
from .sampling import (
    DEFAULT_EMBED_DIM,
    DEFAULT_EMBED_NOISE,
    EmbeddingPool,
    OracleEmbedder,
    build_pool,
    save_pool,
)
from .types import ClipRecord, FrameSequence, PhraseQuery

HOP_SECONDS = 0.01


@dataclass
class SynthConfig:
    num_classes: int = 24
    variants_per_class: int = 4
    clips: int = 2000
    frames: int = 100
    feature_dim: int = 20
    events_min: int = 1
    events_max: int = 3
    duration_min: float = 0.1
    duration_max: float = 0.9
    noise_sigma: float = 0.25
    noise_smoothing: int = 5
    embed_dim: int = DEFAULT_EMBED_DIM
    embed_noise: float = DEFAULT_EMBED_NOISE
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if self.num_classes < 1 or self.variants_per_class < 1:
            raise ConfigError("num_classes and variants_per_class must be >= 1")
        if self.clips < 0:
            raise ConfigError("clips must be >= 0")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.feature_dim < 4:
            raise ConfigError("feature_dim must be >= 4 (signatures use a quarter)")
        if not 1 <= self.events_min <= self.events_max:
            raise ConfigError("events range must satisfy 1 <= min <= max")
        if not 0.0 < self.duration_min <= self.duration_max <= 1.0:
            raise ConfigError("duration fractions must satisfy 0 < min <= max <= 1")
        if self.noise_sigma < 0 or self.embed_noise < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if self.noise_smoothing < 1:
            raise ConfigError("noise_smoothing must be >= 1")
        return self


@dataclass
class SynthData:
    """In-memory generator output; records carry hidden class ids."""

    records: list
    pool: EmbeddingPool
    embedder: OracleEmbedder
    signatures: np.ndarray
    config: SynthConfig


def _zipf_weights(num_classes: int) -> np.ndarray:
    weights = 1.0 / (np.arange(num_classes) + 1.0)
    return weights / weights.sum()


def _allocate_variants(num_classes: int, total: int) -> np.ndarray:
    """Split ``total`` phrase texts across classes by the Zipf weights, min 1.

    Hamilton apportionment: floor each quota (clamped up to 1), hand leftovers
    to the largest remainders, and if the clamping overshot, take the excess
    back from the largest counts. Ties break toward the lower class index, so
    the split is deterministic without consuming any rng.
    """
    quotas = _zipf_weights(num_classes) * total
    counts = np.maximum(1, np.floor(quotas).astype(int))
    remainders = np.where(counts < quotas, quotas - counts, -1.0)
    while counts.sum() < total:
        k = int(np.argmax(remainders))
        counts[k] += 1
        remainders[k] = -1.0
    while counts.sum() > total:
        k = int(np.argmax(counts))
        counts[k] -= 1
    return counts


def _background_noise(gen, frames: int, dim: int, sigma: float,
                      smoothing: int) -> np.ndarray:
    """Gaussian background with per-frame std sigma.

    Adjacent frames are correlated over a `smoothing`-frame window, the way
    spectral frames from overlapping analysis windows are; the moving average
    is rescaled so the marginal distribution stays N(0, sigma^2).
    """
    raw = gen.normal(0.0, 1.0, (frames + smoothing - 1, dim))
    if smoothing == 1:
        return sigma * raw
    windows = np.lib.stride_tricks.sliding_window_view(raw, smoothing, axis=0)
    return sigma * np.sqrt(smoothing) * windows.mean(axis=-1)


def _merge_segments(segments):
    segments = sorted(segments)
    merged = [list(segments[0])]
    for onset, offset in segments[1:]:
        if onset <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], offset)
        else:
            merged.append([onset, offset])
    return [(a, b) for a, b in merged]


def generate(config: SynthConfig) -> SynthData:
    """Deterministically generate records, oracle embedder, and phrase pool."""
    config.validate()
    root = Rng(config.seed)

    sig_gen = root.child("signatures").generator
    quarter = config.feature_dim // 4
    signatures = np.zeros((config.num_classes, config.feature_dim))
    for k in range(config.num_classes):
        dims = sig_gen.choice(config.feature_dim, size=quarter, replace=False)
        signatures[k, dims] = sig_gen.choice([-1.0, 1.0], size=quarter)

    # variant counts follow the class-frequency skew (total = K * variants);
    # variants share their class's two token ids and differ in one
    # variant-specific token, like paraphrases sharing most of their wording
    variant_counts = _allocate_variants(
        config.num_classes, config.num_classes * config.variants_per_class
    )
    phrase_table = []
    pid = 2 * config.num_classes
    for k in range(config.num_classes):
        row = []
        for v in range(variant_counts[k]):
            row.append(
                PhraseQuery(
                    text=f"sound-{k:02d}-{v}",
                    tokens=(2 * k, 2 * k + 1, pid),
                    class_id=k,
                )
            )
            pid += 1
        phrase_table.append(row)

    weights = _zipf_weights(config.num_classes)
    clip_gen = root.child("clips").generator
    records = []
    for i in range(config.clips):
        n_events = int(clip_gen.integers(config.events_min, config.events_max + 1))
        classes = clip_gen.choice(config.num_classes, size=n_events, p=weights)
        features = _background_noise(
            clip_gen, config.frames, config.feature_dim,
            config.noise_sigma, config.noise_smoothing,
        )
        spans: dict = {}
        for k in classes:
            frac = clip_gen.uniform(config.duration_min, config.duration_max)
            length = max(1, int(round(frac * config.frames)))
            length = min(length, config.frames)
            onset = int(clip_gen.integers(0, config.frames - length + 1))
            features[onset:onset + length] += signatures[k]
            spans.setdefault(int(k), []).append((onset, onset + length))

        caption = []
        labels = []
        for index, k in enumerate(spans):  # insertion order = first occurrence
            variant = int(clip_gen.integers(len(phrase_table[k])))
            caption.append(phrase_table[k][variant])
            for onset, offset in _merge_segments(spans[k]):
                labels.append((index, onset * HOP_SECONDS, offset * HOP_SECONDS))
        records.append(
            ClipRecord(
                frames=FrameSequence(
                    clip_id=f"clip-{i:05d}", features=features,
                    hop_seconds=HOP_SECONDS,
                ),
                caption=tuple(caption),
                strong_labels=tuple(labels),
            )
        )

    embedder = OracleEmbedder(
        num_classes=config.num_classes,
        dim=config.embed_dim,
        noise_sigma=config.embed_noise,
        seed=root.child("embeddings").seed,
    )
    pool = build_pool(records, embedder) if records else None
    return SynthData(
        records=records, pool=pool, embedder=embedder,
        signatures=signatures, config=config,
    )


def write_dataset(data: SynthData, out_dir) -> Path:
    """Emit dataset.jsonl, dataset.labels.jsonl, and pool.bin into a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = save_dataset(data.records, out_dir)
    save_strong_labels(data.records, dataset_path)
    if data.pool is not None:
        save_pool(data.pool, out_dir / POOL_BASENAME)
    return out_dir


def pair_durations(record: ClipRecord):
    """Total labeled seconds per caption phrase index."""
    totals = [0.0] * len(record.caption)
    for index, onset, offset in record.strong_labels:
        totals[index] += offset - onset
    return totals


def make_short_subset(records) -> set:
    """(clip_id, phrase_text) pairs whose labeled span is under half the clip.

    The comparison is strict: a phrase covering exactly half the clip is
    excluded. A 1 ns slack absorbs float drift in ``frames * hop`` so that
    exact halves stay excluded regardless of rounding direction.
    """
    subset = set()
    for record in records:
        if not record.strong_labels:
            raise DataError(
                f"clip {record.clip_id!r} has no strong labels; the short subset "
                "needs the sidecar"
            )
        half = 0.5 * record.frames.duration_seconds
        for phrase, total in zip(record.caption, pair_durations(record)):
            if total < half - 1e-9:
                subset.add((record.clip_id, phrase.text))
    return subset
