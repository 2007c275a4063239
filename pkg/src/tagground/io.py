"""Dataset, sidecar-label, and prediction file I/O.

Formats (all UTF-8, LF, one JSON object per line):

- dataset:    ``{"clip_id", "features": [[...]...], "hop_seconds", "caption":
  [{"text", "tokens"}...]}``
- sidecar:    ``{"clip_id", "labels": [{"phrase_index", "onset", "offset"}...]}``
  stored next to the dataset as ``<stem>.labels.jsonl`` so that training code
  can load the dataset without ever opening the labels.
- predictions: ``{"clip_id", "phrase", "probs": [...]}``

Floats are serialized with 6 significant digits; parsing and re-serializing a
file reproduces it byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .types import ClipRecord, FrameSequence, PhraseQuery

DATASET_BASENAME = "dataset.jsonl"
POOL_BASENAME = "pool.bin"


def round6(x: float) -> float:
    """Round to 6 significant decimal digits (the on-disk float policy)."""
    return float(f"{float(x):.6g}")


def _round6_rows(matrix) -> list:
    return [[round6(v) for v in row] for row in matrix]


def resolve_dataset_path(path) -> Path:
    """Accept either a dataset file or a directory containing ``dataset.jsonl``."""
    path = Path(path)
    if path.is_dir():
        return path / DATASET_BASENAME
    return path


def sidecar_path(dataset_path) -> Path:
    dataset_path = resolve_dataset_path(dataset_path)
    stem = dataset_path.name
    if stem.endswith(".jsonl"):
        stem = stem[: -len(".jsonl")]
    return dataset_path.with_name(stem + ".labels.jsonl")


def _dump_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def save_dataset(records, path) -> Path:
    """Write the feature/caption file (never the strong labels)."""
    path = resolve_dataset_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            obj = {
                "clip_id": record.clip_id,
                "features": _round6_rows(record.frames.features),
                "hop_seconds": round6(record.frames.hop_seconds),
                "caption": [
                    {"text": p.text, "tokens": list(p.tokens)} for p in record.caption
                ],
            }
            fh.write(_dump_line(obj) + "\n")
    return path


def save_strong_labels(records, path) -> Path:
    """Write the evaluation-only sidecar next to the dataset file."""
    path = sidecar_path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            obj = {
                "clip_id": record.clip_id,
                "labels": [
                    {
                        "phrase_index": index,
                        "onset": round6(onset),
                        "offset": round6(offset),
                    }
                    for index, onset, offset in record.strong_labels
                ],
            }
            fh.write(_dump_line(obj) + "\n")
    return path


def _parse_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path.name} line {lineno}: malformed JSON ({exc})")


def load_dataset(path, with_labels: bool | None = None) -> list:
    """Load records; strong labels are attached only when the sidecar is read.

    ``with_labels=None`` loads the sidecar iff the file exists; ``True``
    requires it; ``False`` never touches it (the trainer's mode).
    """
    path = resolve_dataset_path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    parsed = []
    seen = set()
    for lineno, obj in _parse_jsonl(path):
        try:
            clip_id = obj["clip_id"]
            frames = FrameSequence(
                clip_id=clip_id,
                features=np.array(obj["features"], dtype=np.float64),
                hop_seconds=float(obj["hop_seconds"]),
            )
            caption = tuple(
                PhraseQuery(text=p["text"], tokens=p["tokens"]) for p in obj["caption"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path.name} line {lineno}: {exc}")
        if clip_id in seen:
            raise DataError(f"{path.name} line {lineno}: duplicate clip_id {clip_id!r}")
        seen.add(clip_id)
        parsed.append((frames, caption))

    labels_by_clip = {}
    labels_file = sidecar_path(path)
    if with_labels is None:
        with_labels = labels_file.is_file()
    if with_labels:
        if not labels_file.is_file():
            raise DataError(f"strong-label sidecar not found: {labels_file}")
        ids = {frames.clip_id for frames, _ in parsed}
        for lineno, obj in _parse_jsonl(labels_file):
            try:
                clip_id = obj["clip_id"]
                labels = [
                    (entry["phrase_index"], entry["onset"], entry["offset"])
                    for entry in obj["labels"]
                ]
            except (KeyError, TypeError) as exc:
                raise DataError(f"{labels_file.name} line {lineno}: {exc}")
            if clip_id not in ids:
                raise DataError(
                    f"{labels_file.name} line {lineno}: unknown clip_id {clip_id!r}"
                )
            labels_by_clip[clip_id] = labels

    return [
        ClipRecord(
            frames=frames,
            caption=caption,
            strong_labels=tuple(labels_by_clip.get(frames.clip_id, ())),
        )
        for frames, caption in parsed
    ]


def save_predictions(rows, path) -> Path:
    """Write one line per (clip, phrase) pair; probs follow the float policy."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for clip_id, phrase_text, probs in rows:
            obj = {
                "clip_id": clip_id,
                "phrase": phrase_text,
                "probs": [round6(p) for p in np.asarray(probs).ravel()],
            }
            fh.write(_dump_line(obj) + "\n")
    return path


def load_predictions(path) -> dict:
    """Read predictions into ``{(clip_id, phrase_text): probs array}``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    out = {}
    for lineno, obj in _parse_jsonl(path):
        try:
            key = (obj["clip_id"], obj["phrase"])
            probs = np.asarray(obj["probs"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path.name} line {lineno}: {exc}")
        if key in out:
            raise DataError(
                f"{path.name} line {lineno}: duplicate prediction for {key!r}"
            )
        out[key] = probs
    return out
