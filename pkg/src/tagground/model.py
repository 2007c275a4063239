"""The trainable grounding model and its checkpoint format.

The model is deliberately tiny: a word-embedding table with mean pooling as
the text encoder, a single affine+tanh layer as the frame encoder, and
sigmoid(dot) as the frame-phrase similarity. Everything downstream (pooling,
losses, sampling, self-supervision) is architecture-agnostic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import Rng
from .types import FrameSequence
from .validation import as_float_matrix, as_float_vector

CHECKPOINT_FORMAT = "tagground-checkpoint"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.05

_PARAM_ORDER = ("word_embeddings", "encoder_weights", "encoder_bias")


@dataclass
class ModelParams:
    word_embeddings: np.ndarray  # V x E
    encoder_weights: np.ndarray  # D x E
    encoder_bias: np.ndarray  # E

    def __post_init__(self):
        self.word_embeddings = as_float_matrix(self.word_embeddings, "word_embeddings")
        self.encoder_weights = as_float_matrix(self.encoder_weights, "encoder_weights")
        self.encoder_bias = as_float_vector(self.encoder_bias, "encoder_bias")
        if self.word_embeddings.shape[1] != self.encoder_weights.shape[1]:
            raise DataError("word embedding and encoder output dims differ")
        if self.encoder_bias.size != self.encoder_weights.shape[1]:
            raise DataError("encoder bias length does not match output dim")

    @property
    def vocab_size(self) -> int:
        return self.word_embeddings.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.encoder_weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.encoder_weights.shape[1]

    def as_dict(self) -> dict:
        return {
            "word_embeddings": self.word_embeddings,
            "encoder_weights": self.encoder_weights,
            "encoder_bias": self.encoder_bias,
        }

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.word_embeddings.copy(),
            self.encoder_weights.copy(),
            self.encoder_bias.copy(),
        )


def init_params(vocab_size: int, feature_dim: int, embed_dim: int, rng: Rng) -> ModelParams:
    """Uniform(-0.05, 0.05) init for every parameter, from the run seed."""
    gen = rng.generator
    return ModelParams(
        word_embeddings=gen.uniform(-INIT_SCALE, INIT_SCALE, (vocab_size, embed_dim)),
        encoder_weights=gen.uniform(-INIT_SCALE, INIT_SCALE, (feature_dim, embed_dim)),
        encoder_bias=gen.uniform(-INIT_SCALE, INIT_SCALE, embed_dim),
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def embed_phrase(params: ModelParams, phrase) -> np.ndarray:
    """Mean of the phrase's token embedding rows."""
    for token in phrase.tokens:
        if token >= params.vocab_size:
            raise DataError(
                f"phrase {phrase.text!r}: token id {token} is out of vocabulary "
                f"(V={params.vocab_size})"
            )
    rows = params.word_embeddings[list(phrase.tokens)]
    return rows.mean(axis=0)


def encode_frames(params: ModelParams, frames: FrameSequence) -> np.ndarray:
    """tanh(X W + b) per frame."""
    features = frames.features
    if features.shape[1] != params.feature_dim:
        raise DataError(
            f"clip {frames.clip_id!r}: feature dim {features.shape[1]} does not "
            f"match model D={params.feature_dim}"
        )
    return np.tanh(features @ params.encoder_weights + params.encoder_bias)


def frame_phrase_similarity(a: np.ndarray, t: np.ndarray) -> np.ndarray:
    """sigmoid(a_t . t_n) for every frame encoding against one phrase vector."""
    a = as_float_matrix(a, "frame encodings")
    t = as_float_vector(t, "phrase embedding")
    if a.shape[1] != t.size:
        raise DataError(
            f"frame encoding dim {a.shape[1]} does not match phrase dim {t.size}"
        )
    return sigmoid(a @ t)


def infer(params: ModelParams, frames: FrameSequence, phrases) -> np.ndarray:
    """T x N similarity matrix for a clip against a phrase list (no pooling)."""
    phrases = list(phrases)
    if not phrases:
        raise DataError("infer needs at least one phrase")
    encoded = encode_frames(params, frames)
    text = np.stack([embed_phrase(params, p) for p in phrases], axis=1)  # E x N
    return sigmoid(encoded @ text)


class Adam:
    """Adam over a dict of named parameter arrays; lr is mutable (schedule)."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = {k: np.zeros_like(v) for k, v in params.items()}
        self.second_moment = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for key, grad in grads.items():
            m = self.first_moment[key]
            v = self.second_moment[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_checkpoint(params: ModelParams, config: dict, path) -> Path:
    """Length-prefixed JSON header followed by raw little-endian float64 blocks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = params.as_dict()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "vocab_size": params.vocab_size,
        "feature_dim": params.feature_dim,
        "embed_dim": params.embed_dim,
        "config": config,
        "arrays": [
            {"name": name, "shape": list(arrays[name].shape)}
            for name in _PARAM_ORDER
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in _PARAM_ORDER:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    """Return (ModelParams, header dict)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read(8)
        if len(raw) != 8:
            raise DataError(f"{path.name}: truncated checkpoint header")
        (header_len,) = struct.unpack("<Q", raw)
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path.name}: bad checkpoint header ({exc})")
        if header.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"{path.name}: not a {CHECKPOINT_FORMAT} file")
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"{path.name}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    missing = [n for n in _PARAM_ORDER if n not in arrays]
    if missing:
        raise DataError(f"{path.name}: checkpoint missing arrays {missing}")
    params = ModelParams(**{name: arrays[name] for name in _PARAM_ORDER})
    return params, header
