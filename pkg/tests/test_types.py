import numpy as np
import pytest

from tagground.errors import DataError
from tagground.rng import Rng
from tagground.types import ClipRecord, FrameSequence, PhraseQuery, split_dataset


def make_record(clip_id="c0", frames=10, dim=4, labels=()):
    return ClipRecord(
        frames=FrameSequence(clip_id=clip_id, features=np.zeros((frames, dim))),
        caption=(PhraseQuery(text="dog barks", tokens=(0, 1)),),
        strong_labels=labels,
    )


def test_frame_sequence_properties():
    fs = FrameSequence(clip_id="c", features=np.ones((50, 3)), hop_seconds=0.02)
    assert fs.num_frames == 50
    assert fs.feature_dim == 3
    assert fs.duration_seconds == pytest.approx(1.0)


def test_frame_sequence_rejects_bad_input():
    with pytest.raises(DataError, match="features"):
        FrameSequence(clip_id="c", features=np.zeros(5))
    with pytest.raises(DataError, match="non-finite"):
        FrameSequence(clip_id="c", features=np.array([[np.nan, 1.0]]))
    with pytest.raises(DataError, match="hop_seconds"):
        FrameSequence(clip_id="c", features=np.zeros((2, 2)), hop_seconds=0.0)


def test_phrase_query_validation():
    q = PhraseQuery(text="a", tokens=[3, "4"])
    assert q.tokens == (3, 4)
    with pytest.raises(DataError):
        PhraseQuery(text="", tokens=(1,))
    with pytest.raises(DataError):
        PhraseQuery(text="a", tokens=())
    with pytest.raises(DataError):
        PhraseQuery(text="a", tokens=(-1,))


def test_clip_record_label_validation():
    make_record(labels=((0, 0.0, 0.05),))  # fine
    with pytest.raises(DataError, match="phrase_index"):
        make_record(labels=((1, 0.0, 0.05),))
    with pytest.raises(DataError, match="interval"):
        make_record(labels=((0, 0.05, 0.05),))
    with pytest.raises(DataError, match="interval"):
        make_record(labels=((0, 0.0, 0.2),))  # beyond 10 frames * 0.01 s


def test_events_for_phrase_sorted():
    rec = make_record(labels=((0, 0.05, 0.08), (0, 0.0, 0.02)))
    assert rec.events_for_phrase(0) == [(0.0, 0.02), (0.05, 0.08)]
    assert rec.events_for_phrase(1) == []


def test_split_dataset_deterministic_partition():
    records = [make_record(clip_id=f"c{i}") for i in range(10)]
    train, val = split_dataset(records, 3, Rng(0))
    train2, val2 = split_dataset(records, 3, Rng(0))
    assert [r.clip_id for r in train] == [r.clip_id for r in train2]
    assert [r.clip_id for r in val] == [r.clip_id for r in val2]
    assert len(val) == 3 and len(train) == 7
    assert {r.clip_id for r in train} | {r.clip_id for r in val} == {
        f"c{i}" for i in range(10)
    }


def test_split_dataset_bounds():
    records = [make_record(clip_id=f"c{i}") for i in range(4)]
    for bad in (0, 4, 7):
        with pytest.raises(DataError, match="validation_count"):
            split_dataset(records, bad, Rng(0))
