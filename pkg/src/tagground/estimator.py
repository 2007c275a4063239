"""Weakly-supervised training of the grounding model.

``TextAudioGrounder`` is a scikit-learn style estimator: constructor arguments
are stored verbatim, ``fit`` learns from clip records (weak labels only) and
exposes ``params_``/``history_``, ``predict`` returns frame-phrase similarity
matrices for each record's caption.

Two training modes:

- ``sentence``: minibatches of B clips; the B x B clip-sentence similarity
  grid (audio pooling over frames, then text pooling over caption phrases)
  feeds the max-margin ranking loss.
- ``phrase``: per clip, a sampler supplies n phrases (positives first) and the
  clip-level BCE is applied to the audio-pooled similarities. With a teacher,
  the combined self-supervision loss replaces plain BCE.

Validation loss drives the schedule: lr drops to a tenth after
``plateau_patience`` epochs without improvement, training stops
``early_stop_patience`` epochs after the best epoch, and the best-validation
parameters are what ``fit`` keeps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError
from .losses import bce_loss, ranking_loss, selfsup_loss
from .model import Adam, ModelParams, init_params, sigmoid
from .pooling import (
    AUDIO_POOL_KINDS,
    TEXT_POOL_KINDS,
    pool_columns,
    pool_columns_grad,
)
from .rng import Rng
from .selfsup import Teacher, refine_labels, teacher_predict
from .types import split_dataset

MODES = ("sentence", "phrase")


@dataclass
class TrainConfig:
    """Bag of training knobs; mirrors the estimator's constructor."""

    mode: str = "phrase"
    audio_pool: str = "linsoft"
    text_pool: str = "mean"
    embed_dim: int = 32
    margin: float = 0.2
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 10
    plateau_patience: int = 3
    lr: float = 0.001
    validation_count: int = 200
    resample_negatives: bool = True
    seed: int = 0


def _embed_phrases(word_embeddings: np.ndarray, phrases) -> tuple:
    """Mean token embedding per phrase, grouped by token count for speed.

    Returns (n x E matrix, groups) where groups holds (row_indices, id_matrix)
    pairs reused by the backward pass.
    """
    vocab = word_embeddings.shape[0]
    by_len: dict = {}
    for row, phrase in enumerate(phrases):
        for t in phrase.tokens:
            if t >= vocab:
                raise DataError(
                    f"phrase {phrase.text!r}: token id {t} is out of vocabulary"
                )
        by_len.setdefault(len(phrase.tokens), []).append(row)
    out = np.empty((len(phrases), word_embeddings.shape[1]))
    groups = []
    for length, rows in by_len.items():
        ids = np.array([phrases[r].tokens for r in rows], dtype=int)
        out[rows] = word_embeddings[ids].mean(axis=1)
        groups.append((np.array(rows, dtype=int), ids))
    return out, groups


def _scatter_phrase_grad(grad_we: np.ndarray, groups, d_text: np.ndarray) -> None:
    for rows, ids in groups:
        length = ids.shape[1]
        contrib = np.repeat(d_text[rows] / length, length, axis=0)
        np.add.at(grad_we, ids.ravel(), contrib)


class TextAudioGrounder(BaseEstimator):
    """Frame-phrase grounding model trained from clip-level weak labels.

    Parameters mirror :class:`TrainConfig`; ``sampler`` is a
    :class:`~tagground.sampling.NegativeSampler` (phrase mode only, optional)
    and ``teacher`` a :class:`~tagground.selfsup.Teacher` or fitted estimator
    (phrase mode only).
    """

    def __init__(self, mode="phrase", audio_pool="linsoft", text_pool="mean",
                 embed_dim=32, margin=0.2, batch_size=32, max_epochs=100,
                 early_stop_patience=10, plateau_patience=3, lr=0.001,
                 validation_count=200, resample_negatives=True, sampler=None,
                 teacher=None, seed=0, verbose=0):
        self.mode = mode
        self.audio_pool = audio_pool
        self.text_pool = text_pool
        self.embed_dim = embed_dim
        self.margin = margin
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.plateau_patience = plateau_patience
        self.lr = lr
        self.validation_count = validation_count
        self.resample_negatives = resample_negatives
        self.sampler = sampler
        self.teacher = teacher
        self.seed = seed
        self.verbose = verbose

    # ------------------------------------------------------------------ fit

    def fit(self, records, y=None, validation=None):
        records = list(records)
        self._check_config(records)
        teacher = self._resolve_teacher()

        rng = Rng(self.seed)
        if validation is not None:
            train_records, val_records = records, list(validation)
        else:
            if not 0 < self.validation_count < len(records):
                raise ConfigError(
                    f"validation_count={self.validation_count} must be in "
                    f"(0, {len(records)}); pass validation= explicitly for tiny sets"
                )
            train_records, val_records = split_dataset(
                records, self.validation_count, rng.child("split")
            )
        if self.mode == "sentence" and len(val_records) < 2:
            raise ConfigError("sentence mode needs at least 2 validation clips")

        feature_dim = records[0].frames.feature_dim
        vocab = 0
        for record in records:
            for phrase in record.caption:
                vocab = max(vocab, max(phrase.tokens) + 1)
        if self.sampler is not None:
            for phrase in self.sampler.pool.phrases:
                vocab = max(vocab, max(phrase.tokens) + 1)

        params = init_params(vocab, feature_dim, self.embed_dim, rng.child("init"))
        arrays = params.as_dict()
        optimizer = Adam(arrays, lr=self.lr)

        frozen_val = self._freeze_validation_batches(val_records, rng.child("val"))
        frozen_train = None
        if self.mode == "phrase" and not self.resample_negatives:
            frozen_train = {
                rec.clip_id: self._phrase_batch(rec, rng.child("train-frozen"))
                for rec in train_records
            }

        best_val = np.inf
        best_params = params.copy()
        best_epoch = 0
        plateau_counter = 0
        lr_exponent = 0
        history = []

        for epoch in range(1, self.max_epochs + 1):
            epoch_rng = rng.child(f"epoch-{epoch}")
            order = epoch_rng.generator.permutation(len(train_records))
            train_loss = self._run_epoch(
                arrays, optimizer, [train_records[i] for i in order],
                epoch_rng, teacher, frozen_train,
            )
            val_loss = self._validation_loss(arrays, frozen_val, teacher)
            history.append(
                {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                 "lr": optimizer.lr}
            )
            if self.verbose:
                print(
                    f"epoch {epoch:3d}  train {train_loss:.5f}  "
                    f"val {val_loss:.5f}  lr {optimizer.lr:g}"
                )
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = ModelParams(**{k: v.copy() for k, v in arrays.items()})
                plateau_counter = 0
            else:
                plateau_counter += 1
                if plateau_counter >= self.plateau_patience:
                    lr_exponent += 1
                    optimizer.lr = self.lr * 10.0 ** (-lr_exponent)
                    plateau_counter = 0
            if epoch - best_epoch >= self.early_stop_patience:
                break

        self.params_ = best_params
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.best_val_loss_ = float(best_val)
        self.vocab_size_ = vocab
        self.feature_dim_ = feature_dim
        self.lr_exponent_ = lr_exponent
        return self

    # ------------------------------------------------------------ inference

    def predict(self, records):
        """Frame-phrase probability matrix per record, for its caption phrases."""
        check_is_fitted(self, "params_")
        from .model import infer

        return [infer(self.params_, rec.frames, rec.caption) for rec in records]

    # ------------------------------------------------------------ internals

    def _check_config(self, records):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.audio_pool not in AUDIO_POOL_KINDS:
            raise ConfigError(f"unknown audio pool {self.audio_pool!r}")
        if self.text_pool not in TEXT_POOL_KINDS:
            raise ConfigError(f"unknown text pool {self.text_pool!r}")
        if not records:
            raise DataError("fit needs at least one record")
        dims = {rec.frames.feature_dim for rec in records}
        if len(dims) != 1:
            raise DataError(f"records disagree on feature dim: {sorted(dims)}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.mode == "sentence":
            if self.batch_size < 2:
                raise ConfigError("sentence mode needs batch_size >= 2")
            if self.sampler is not None:
                raise ConfigError("a sampler is only valid in phrase mode")
            if self.teacher is not None:
                raise ConfigError("a teacher is only valid in phrase mode")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")

    def _resolve_teacher(self):
        teacher = self.teacher
        if teacher is None:
            return None
        if isinstance(teacher, TextAudioGrounder):
            check_is_fitted(teacher, "params_")
            teacher = Teacher(params=teacher.params_, audio_pool=teacher.audio_pool)
        if teacher.audio_pool != self.audio_pool:
            raise ConfigError(
                f"teacher was trained with {teacher.audio_pool!r} pooling but the "
                f"student uses {self.audio_pool!r}; they must match"
            )
        return teacher

    def _phrase_batch(self, record, rng: Rng):
        if self.sampler is None:
            phrases = tuple(record.caption)
            return phrases, np.ones(len(phrases))
        batch = self.sampler.sample(record, rng)
        return batch.phrases, batch.y

    def _freeze_validation_batches(self, val_records, rng: Rng):
        if self.mode == "sentence":
            batches = []
            for start in range(0, len(val_records), self.batch_size):
                chunk = val_records[start:start + self.batch_size]
                if len(chunk) >= 2:
                    batches.append(chunk)
            return batches
        return [(rec, self._phrase_batch(rec, rng)) for rec in val_records]

    def _run_epoch(self, arrays, optimizer, train_records, epoch_rng, teacher,
                   frozen_train):
        total = 0.0
        count = 0
        for start in range(0, len(train_records), self.batch_size):
            chunk = train_records[start:start + self.batch_size]
            if self.mode == "sentence":
                if len(chunk) < 2:
                    continue  # a single clip cannot form a ranking grid
                loss, grads = self._sentence_loss(arrays, chunk, with_grad=True)
            else:
                loss, grads = self._phrase_chunk_loss(
                    arrays, chunk, epoch_rng, teacher, frozen_train, with_grad=True
                )
            optimizer.step(arrays, grads)
            total += loss * len(chunk)
            count += len(chunk)
        return total / max(count, 1)

    def _validation_loss(self, arrays, frozen_val, teacher):
        if self.mode == "sentence":
            losses = [
                self._sentence_loss(arrays, chunk, with_grad=False)[0] * len(chunk)
                for chunk in frozen_val
            ]
            sizes = sum(len(chunk) for chunk in frozen_val)
            return float(sum(losses) / max(sizes, 1))
        total = 0.0
        for record, (phrases, y) in frozen_val:
            total += self._phrase_loss_one(
                arrays, record, phrases, y, teacher, with_grad=False
            )[0]
        return total / max(len(frozen_val), 1)

    def _phrase_chunk_loss(self, arrays, chunk, epoch_rng, teacher, frozen_train,
                           with_grad: bool):
        grads = {k: np.zeros_like(v) for k, v in arrays.items()} if with_grad else None
        total = 0.0
        for record in chunk:
            if frozen_train is not None:
                phrases, y = frozen_train[record.clip_id]
            else:
                phrases, y = self._phrase_batch(record, epoch_rng)
            loss, _ = self._phrase_loss_one(
                arrays, record, phrases, y, teacher, with_grad, grads
            )
            total += loss
        loss = total / len(chunk)
        if with_grad:
            for g in grads.values():
                g /= len(chunk)
        return loss, grads

    def _phrase_loss_one(self, arrays, record, phrases, y, teacher,
                         with_grad: bool, grads=None):
        we = arrays["word_embeddings"]
        text, groups = _embed_phrases(we, phrases)  # n x E
        features = record.frames.features
        encoded = np.tanh(features @ arrays["encoder_weights"] + arrays["encoder_bias"])
        s = sigmoid(encoded @ text.T)  # T x n

        if teacher is not None:
            pseudo = teacher_predict(teacher.params, record, phrases, self.audio_pool)
            y_refined = refine_labels(y, pseudo.y_self_clip)
            loss, d_s = selfsup_loss(s, pseudo.y_self_frames, y_refined, self.audio_pool)
        else:
            s_cp = pool_columns(self.audio_pool, s)
            loss, d_cp = bce_loss(s_cp, y)
            d_s = pool_columns_grad(self.audio_pool, s, d_cp) if with_grad else None
        if not with_grad:
            return loss, None

        d_logits = d_s * s * (1.0 - s)
        d_text = d_logits.T @ encoded  # n x E
        d_encoded = d_logits @ text  # T x E
        d_pre = d_encoded * (1.0 - encoded * encoded)
        grads["encoder_weights"] += features.T @ d_pre
        grads["encoder_bias"] += d_pre.sum(axis=0)
        _scatter_phrase_grad(grads["word_embeddings"], groups, d_text)
        return loss, grads

    def _sentence_loss(self, arrays, chunk, with_grad: bool):
        we = arrays["word_embeddings"]
        all_phrases = [p for rec in chunk for p in rec.caption]
        counts = np.array([len(rec.caption) for rec in chunk])
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        text, groups = _embed_phrases(we, all_phrases)  # M x E

        encoded = []
        pooled_rows = []
        sims = []
        grid = np.empty((len(chunk), len(chunk)))
        for i, rec in enumerate(chunk):
            enc = np.tanh(
                rec.frames.features @ arrays["encoder_weights"] + arrays["encoder_bias"]
            )
            s = sigmoid(enc @ text.T)  # T_i x M
            pooled = pool_columns(self.audio_pool, s)  # M
            sums = np.add.reduceat(pooled, starts)
            grid[i] = sums / counts if self.text_pool == "mean" else sums
            encoded.append(enc)
            sims.append(s)
            pooled_rows.append(pooled)
        loss, d_grid = ranking_loss(grid, self.margin)
        if not with_grad:
            return loss, None

        grads = {k: np.zeros_like(v) for k, v in arrays.items()}
        d_text = np.zeros_like(text)
        for i, rec in enumerate(chunk):
            upstream = d_grid[i] / counts if self.text_pool == "mean" else d_grid[i]
            d_pooled = np.repeat(upstream, counts)  # M
            d_s = pool_columns_grad(self.audio_pool, sims[i], d_pooled)
            d_logits = d_s * sims[i] * (1.0 - sims[i])
            d_text += d_logits.T @ encoded[i]
            d_encoded = d_logits @ text
            d_pre = d_encoded * (1.0 - encoded[i] * encoded[i])
            grads["encoder_weights"] += rec.frames.features.T @ d_pre
            grads["encoder_bias"] += d_pre.sum(axis=0)
        _scatter_phrase_grad(grads["word_embeddings"], groups, d_text)
        return loss, grads


def train(records, config: TrainConfig, sampler=None, teacher=None,
          validation=None):
    """Functional wrapper: returns (best ModelParams, per-epoch log)."""
    fields = asdict(config)
    estimator = TextAudioGrounder(sampler=sampler, teacher=teacher, **fields)
    estimator.fit(records, validation=validation)
    return estimator.params_, estimator.history_
