"""Estimator behavior: sklearn API, schedule mechanics, determinism, no-peek."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tagground.errors import ConfigError, DataError
from tagground.estimator import TextAudioGrounder, TrainConfig, train
from tagground.sampling import NegativeSampler, kmeans
from tagground.selfsup import Teacher
from tagground.types import ClipRecord


def quick(**kw):
    defaults = dict(max_epochs=4, validation_count=24, seed=3)
    defaults.update(kw)
    return TextAudioGrounder(**defaults)


@pytest.fixture(scope="module")
def fitted(tiny_data):
    return quick().fit(tiny_data.records)


# ------------------------------------------------------------- sklearn API


def test_get_params_round_trip():
    est = quick(audio_pool="max", lr=0.01)
    params = est.get_params()
    assert params["audio_pool"] == "max"
    assert params["lr"] == 0.01
    est.set_params(margin=0.5)
    assert est.get_params()["margin"] == 0.5


def test_clone_preserves_settings(tiny_data):
    sampler = NegativeSampler(tiny_data.pool, "random", n=4)
    est = quick(sampler=sampler, audio_pool="expsoft")
    twin = clone(est)
    assert twin.audio_pool == "expsoft"
    assert twin.sampler.strategy == sampler.strategy
    assert twin.sampler.n == sampler.n
    assert not hasattr(twin, "params_")


def test_predict_requires_fit(tiny_data):
    with pytest.raises(NotFittedError):
        quick().predict(tiny_data.records[:2])


def test_fit_returns_self_and_exposes_state(fitted):
    assert fitted.params_ is not None
    assert fitted.best_epoch_ >= 1
    assert fitted.vocab_size_ > 0
    assert fitted.feature_dim_ == 20
    assert isinstance(fitted.history_, list) and fitted.history_
    row = fitted.history_[0]
    assert set(row) == {"epoch", "train_loss", "val_loss", "lr"}


def test_predict_shapes_and_range(fitted, tiny_data):
    outputs = fitted.predict(tiny_data.records[:5])
    assert len(outputs) == 5
    for record, probs in zip(tiny_data.records[:5], outputs):
        assert probs.shape == (record.frames.num_frames, len(record.caption))
        assert np.all((probs > 0.0) & (probs < 1.0))


# ------------------------------------------------------- schedule mechanics


def test_best_epoch_is_first_strict_minimum(fitted):
    vals = [row["val_loss"] for row in fitted.history_]
    best = min(vals)
    assert fitted.best_val_loss_ == pytest.approx(best)
    assert fitted.best_epoch_ == vals.index(best) + 1


def test_recorded_lr_follows_plateau_rule(tiny_data):
    est = quick(max_epochs=12, plateau_patience=1, early_stop_patience=12,
                lr=0.001).fit(tiny_data.records)
    best = np.inf
    plateau = 0
    exponent = 0
    for row in est.history_:
        assert row["lr"] == pytest.approx(0.001 * 10.0 ** (-exponent), rel=1e-12)
        if row["val_loss"] < best:
            best = row["val_loss"]
            plateau = 0
        else:
            plateau += 1
            if plateau >= 1:
                exponent += 1
                plateau = 0
    assert est.lr_exponent_ == exponent


def test_early_stop_trips_at_patience(tiny_data):
    est = quick(max_epochs=40, early_stop_patience=2).fit(tiny_data.records)
    ran = len(est.history_)
    assert ran == 40 or ran == est.best_epoch_ + 2


# ------------------------------------------------------------- determinism


def test_fit_is_deterministic(tiny_data):
    a = quick().fit(tiny_data.records)
    b = quick().fit(tiny_data.records)
    np.testing.assert_array_equal(a.params_.word_embeddings,
                                  b.params_.word_embeddings)
    np.testing.assert_array_equal(a.params_.encoder_weights,
                                  b.params_.encoder_weights)
    assert a.history_ == b.history_


def test_seed_changes_the_fit(tiny_data):
    a = quick(seed=3).fit(tiny_data.records)
    b = quick(seed=4).fit(tiny_data.records)
    assert not np.array_equal(a.params_.encoder_weights,
                              b.params_.encoder_weights)


def test_hidden_labels_never_influence_training(tiny_data):
    """Stripping the evaluation-only strong labels must not move a single bit."""
    stripped = [
        ClipRecord(frames=r.frames, caption=r.caption) for r in tiny_data.records
    ]
    a = quick().fit(tiny_data.records)
    b = quick().fit(stripped)
    np.testing.assert_array_equal(a.params_.word_embeddings,
                                  b.params_.word_embeddings)
    np.testing.assert_array_equal(a.params_.encoder_weights,
                                  b.params_.encoder_weights)
    np.testing.assert_array_equal(a.params_.encoder_bias,
                                  b.params_.encoder_bias)


def test_frozen_negatives_reuse_epoch_one_batches(tiny_data):
    sampler = NegativeSampler(tiny_data.pool, "random", n=4)
    a = quick(sampler=sampler, resample_negatives=False).fit(tiny_data.records)
    b = quick(sampler=sampler, resample_negatives=False).fit(tiny_data.records)
    np.testing.assert_array_equal(a.params_.encoder_weights,
                                  b.params_.encoder_weights)


# ------------------------------------------------------------------- modes


def test_sentence_mode_fits_and_predicts(tiny_data):
    est = quick(mode="sentence", audio_pool="max", batch_size=16)
    est.fit(tiny_data.records)
    probs = est.predict(tiny_data.records[:2])
    assert probs[0].shape[0] == tiny_data.records[0].frames.num_frames


def test_phrase_mode_with_sampler_and_teacher(tiny_data):
    sampler = NegativeSampler(tiny_data.pool, "clustering", n=4,
                              clustering=kmeans(tiny_data.pool, 6, seed=0))
    base = quick(sampler=sampler).fit(tiny_data.records)
    student = quick(
        sampler=sampler, teacher=Teacher(params=base.params_, audio_pool="linsoft")
    ).fit(tiny_data.records)
    assert np.isfinite(student.best_val_loss_)
    assert not np.array_equal(student.params_.encoder_weights,
                              base.params_.encoder_weights)


def test_fitted_estimator_can_serve_as_teacher(tiny_data):
    base = quick().fit(tiny_data.records)
    student = quick(teacher=base, max_epochs=2).fit(tiny_data.records)
    assert np.isfinite(student.best_val_loss_)


def test_explicit_validation_set(tiny_data):
    est = quick(validation_count=10_000)  # would be rejected without validation=
    est.fit(tiny_data.records[:80], validation=tiny_data.records[80:])
    assert est.params_ is not None


def test_functional_train_wrapper_matches_estimator(tiny_data):
    config = TrainConfig(max_epochs=3, validation_count=24, seed=3)
    params, history = train(tiny_data.records, config)
    est = TextAudioGrounder(max_epochs=3, validation_count=24, seed=3)
    est.fit(tiny_data.records)
    np.testing.assert_array_equal(params.encoder_weights,
                                  est.params_.encoder_weights)
    assert history == est.history_


# ------------------------------------------------------------ config errors


def test_config_rejections(tiny_data):
    records = tiny_data.records
    with pytest.raises(ConfigError, match="unknown mode"):
        quick(mode="clip").fit(records)
    with pytest.raises(ConfigError, match="unknown audio pool"):
        quick(audio_pool="median").fit(records)
    with pytest.raises(ConfigError, match="unknown text pool"):
        quick(text_pool="max").fit(records)
    with pytest.raises(ConfigError, match="only valid in phrase mode"):
        quick(mode="sentence",
              sampler=NegativeSampler(tiny_data.pool, "random", n=4)).fit(records)
    with pytest.raises(ConfigError, match="only valid in phrase mode"):
        quick(mode="sentence", teacher=object()).fit(records)
    with pytest.raises(ConfigError, match="batch_size"):
        quick(mode="sentence", batch_size=1).fit(records)
    with pytest.raises(ConfigError, match="validation_count"):
        quick(validation_count=len(records)).fit(records)
    with pytest.raises(DataError, match="at least one record"):
        quick().fit([])


def test_teacher_pool_mismatch(tiny_data):
    base = quick().fit(tiny_data.records)
    student = quick(audio_pool="max",
                    teacher=Teacher(params=base.params_, audio_pool="linsoft"))
    with pytest.raises(ConfigError, match="must match"):
        student.fit(tiny_data.records)


def test_mixed_feature_dims_rejected(tiny_data, rng):
    from tagground.types import FrameSequence, PhraseQuery

    odd = ClipRecord(
        frames=FrameSequence(clip_id="odd", features=rng.normal(size=(10, 7))),
        caption=(PhraseQuery(text="x", tokens=(0,)),),
    )
    with pytest.raises(DataError, match="feature dim"):
        quick().fit(tiny_data.records[:10] + [odd])
