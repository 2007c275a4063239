import numpy as np
import pytest

from tagground.errors import DataError
from tagground.model import (
    Adam,
    ModelParams,
    embed_phrase,
    encode_frames,
    frame_phrase_similarity,
    infer,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
)
from tagground.rng import Rng
from tagground.types import FrameSequence, PhraseQuery


def make_params(v=6, d=4, e=3, seed=0):
    return init_params(v, d, e, Rng(seed))


def test_sigmoid_values_and_stability():
    assert sigmoid(np.array(0.0)) == 0.5
    assert sigmoid(np.array(np.log(3.0))) == pytest.approx(0.75, abs=1e-12)
    big = sigmoid(np.array([1000.0, -1000.0]))
    assert big[0] == 1.0 and big[1] == 0.0
    assert np.all(np.isfinite(big))


def test_init_params_range_and_determinism():
    p1 = make_params(seed=5)
    p2 = make_params(seed=5)
    np.testing.assert_array_equal(p1.word_embeddings, p2.word_embeddings)
    for arr in p1.as_dict().values():
        assert np.all(np.abs(arr) <= 0.05)
    assert p1.vocab_size == 6 and p1.feature_dim == 4 and p1.embed_dim == 3


def test_params_shape_validation():
    with pytest.raises(DataError):
        ModelParams(np.zeros((4, 3)), np.zeros((5, 2)), np.zeros(3))
    with pytest.raises(DataError):
        ModelParams(np.zeros((4, 3)), np.zeros((5, 3)), np.zeros(2))


def test_embed_phrase_mean_and_oov():
    params = make_params()
    phrase = PhraseQuery(text="two words", tokens=(1, 4))
    expected = (params.word_embeddings[1] + params.word_embeddings[4]) / 2
    np.testing.assert_allclose(embed_phrase(params, phrase), expected)
    with pytest.raises(DataError, match="out of vocabulary"):
        embed_phrase(params, PhraseQuery(text="bad", tokens=(6,)))


def test_encode_frames_is_bounded_tanh():
    params = make_params()
    frames = FrameSequence(clip_id="c", features=np.random.default_rng(0).normal(size=(10, 4)))
    encoded = encode_frames(params, frames)
    assert encoded.shape == (10, 3)
    assert np.all(np.abs(encoded) < 1.0)
    bad = FrameSequence(clip_id="c", features=np.zeros((4, 5)))
    with pytest.raises(DataError, match="feature dim"):
        encode_frames(params, bad)


def test_infer_shape_and_range():
    params = make_params()
    frames = FrameSequence(clip_id="c", features=np.ones((7, 4)))
    phrases = [PhraseQuery(text="a", tokens=(0,)), PhraseQuery(text="b", tokens=(1, 2))]
    probs = infer(params, frames, phrases)
    assert probs.shape == (7, 2)
    assert np.all((probs > 0) & (probs < 1))
    with pytest.raises(DataError):
        infer(params, frames, [])


def test_frame_phrase_similarity_matches_infer():
    params = make_params()
    frames = FrameSequence(clip_id="c", features=np.random.default_rng(3).normal(size=(5, 4)))
    phrase = PhraseQuery(text="a", tokens=(2, 3))
    direct = frame_phrase_similarity(
        encode_frames(params, frames), embed_phrase(params, phrase)
    )
    np.testing.assert_allclose(direct, infer(params, frames, [phrase])[:, 0])


def test_adam_reference_first_step():
    # single scalar against the textbook Adam update
    params = {"w": np.array([1.0])}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"w": np.array([0.5])})
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps) ~ lr * sign(g)
    assert params["w"][0] == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-12)


def test_adam_lr_is_mutable_mid_run():
    params = {"w": np.array([0.0])}
    opt = Adam(params, lr=1.0)
    opt.step(params, {"w": np.array([1.0])})
    after_first = params["w"][0]
    opt.lr = 0.0
    opt.step(params, {"w": np.array([1.0])})
    assert params["w"][0] == after_first


def test_checkpoint_round_trip(tmp_path):
    params = make_params(v=9, d=5, e=4, seed=2)
    config = {"mode": "phrase", "audio_pool": "linsoft"}
    path = save_checkpoint(params, config, tmp_path / "model.bin")
    loaded, header = load_checkpoint(path)
    for key, arr in params.as_dict().items():
        np.testing.assert_array_equal(loaded.as_dict()[key], arr)
    assert header["config"] == config
    assert header["vocab_size"] == 9

    # byte-identical re-save
    path2 = save_checkpoint(loaded, header["config"], tmp_path / "model2.bin")
    assert path2.read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x00" * 4)
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(p)
    with pytest.raises(DataError, match="not found"):
        load_checkpoint(tmp_path / "missing.bin")


def test_checkpoint_rejects_wrong_format(tmp_path):
    import json
    import struct

    header = json.dumps({"format": "something-else"}).encode()
    p = tmp_path / "wrong.bin"
    p.write_bytes(struct.pack("<Q", len(header)) + header)
    with pytest.raises(DataError, match="checkpoint"):
        load_checkpoint(p)
