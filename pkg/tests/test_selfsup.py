"""Teacher pseudo labels, label refinement, and teacher checkpoint loading."""

import numpy as np
import pytest

from tagground.errors import DataError
from tagground.model import infer, init_params, save_checkpoint
from tagground.pooling import pool_columns
from tagground.rng import Rng
from tagground.selfsup import Teacher, load_teacher, refine_labels, teacher_predict


@pytest.fixture()
def params():
    return init_params(vocab_size=30, feature_dim=20, embed_dim=8,
                       rng=Rng(21).child("init"))


def test_refine_labels_is_elementwise_max():
    refined = refine_labels([1.0, 0.0, 0.0], [0.2, 0.7, 0.1])
    np.testing.assert_array_equal(refined, [1.0, 0.7, 0.1])


def test_refine_labels_keeps_positives():
    refined = refine_labels([1.0, 1.0], [0.0, 0.3])
    np.testing.assert_array_equal(refined, [1.0, 1.0])


def test_refine_labels_length_mismatch():
    with pytest.raises(DataError):
        refine_labels([1.0, 0.0], [0.5])


def test_teacher_predict_matches_inference(tiny_data, params):
    clip = tiny_data.records[0]
    phrases = list(tiny_data.pool.phrases[:5])
    out = teacher_predict(params, clip, phrases, pool="linsoft")
    assert out.y_self_frames.shape == (clip.frames.num_frames, 5)
    assert out.y_self_clip.shape == (5,)
    assert np.all((out.y_self_frames > 0) & (out.y_self_frames < 1))
    np.testing.assert_array_equal(
        out.y_self_frames, infer(params, clip.frames, phrases)
    )
    np.testing.assert_array_equal(
        out.y_self_clip, pool_columns("linsoft", out.y_self_frames)
    )


def test_teacher_predict_pool_choice_changes_clip_labels(tiny_data, params):
    clip = tiny_data.records[0]
    phrases = list(tiny_data.pool.phrases[:4])
    lin = teacher_predict(params, clip, phrases, pool="linsoft")
    mx = teacher_predict(params, clip, phrases, pool="max")
    assert np.all(mx.y_self_clip >= lin.y_self_clip - 1e-12)
    assert np.any(mx.y_self_clip > lin.y_self_clip)


def test_teacher_predict_needs_phrases(tiny_data, params):
    with pytest.raises(DataError, match="at least one phrase"):
        teacher_predict(params, tiny_data.records[0], [], pool="mean")


def test_load_teacher_roundtrip(tmp_path, params):
    path = tmp_path / "teacher.bin"
    save_checkpoint(params, {"mode": "phrase", "audio_pool": "expsoft"}, path)
    teacher = load_teacher(path)
    assert isinstance(teacher, Teacher)
    assert teacher.audio_pool == "expsoft"
    np.testing.assert_array_equal(
        teacher.params.word_embeddings, params.word_embeddings
    )


def test_load_teacher_defaults_missing_pool_to_linsoft(tmp_path, params):
    path = tmp_path / "teacher.bin"
    save_checkpoint(params, {"mode": "phrase"}, path)
    assert load_teacher(path).audio_pool == "linsoft"


def test_load_teacher_rejects_sentence_mode(tmp_path, params):
    path = tmp_path / "sent.bin"
    save_checkpoint(params, {"mode": "sentence", "audio_pool": "max"}, path)
    with pytest.raises(DataError, match="phrase mode"):
        load_teacher(path)
