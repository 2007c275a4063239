"""Phrase pools, oracle embeddings, k-means, and negative-sampling strategies.

Phrase-level training needs negative phrases for every clip. Random sampling
picks any non-caption phrase and regularly hits "false negatives" (a phrase
describing an event that is present). The two informed strategies avoid that:

- similarity sampling rejects candidates whose embedding-space cosine to any
  positive reaches ``tau``;
- clustering sampling first k-means-partitions the pool, drops every cluster
  containing a positive, and then draws round-robin across the remaining
  clusters so per-cluster visit counts differ by at most one.

Embeddings come from a synthetic oracle (class prototype + noise, unit norm)
standing in for a pretrained text encoder.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SamplingError
from .rng import Rng
from .types import PhraseQuery

DEFAULT_EMBED_DIM = 16
DEFAULT_EMBED_NOISE = 0.1
DEFAULT_NUM_PHRASES = 32
DEFAULT_TAU = 0.5
DEFAULT_CLUSTERS = 32
DEFAULT_CANDIDATE_BATCH = 128

POOL_FORMAT = "tagground-pool"
SAMPLER_STRATEGIES = ("random", "similarity", "clustering")


@dataclass(frozen=True)
class EmbeddingPool:
    """Unique phrases with unit-norm embedding rows (P x F)."""

    phrases: tuple
    embeddings: np.ndarray
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "phrases", tuple(self.phrases))
        emb = np.asarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", emb)
        if len(self.phrases) < 2:
            raise DataError("embedding pool needs at least 2 unique phrases")
        if emb.shape != (len(self.phrases), emb.shape[1]) or emb.ndim != 2:
            raise DataError("embedding matrix shape does not match phrase count")
        norms = np.linalg.norm(emb, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise DataError("embedding rows must be unit-normalized")
        index = {p.text: i for i, p in enumerate(self.phrases)}
        if len(index) != len(self.phrases):
            raise DataError("pool phrases must be unique by text")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.phrases)

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class Clustering:
    """k-means output: per-phrase cluster ids plus centroids and fit stats."""

    n_c: int
    assignments: np.ndarray
    centroids: np.ndarray | None = None
    inertia: float | None = None
    inertia_history: tuple = ()


@dataclass(frozen=True)
class SampledBatch:
    """One clip with n phrases; the first n_p are positives (y=1), rest 0."""

    clip: object
    phrases: tuple
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phrases", tuple(self.phrases))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))

    @property
    def num_positives(self) -> int:
        return int(self.y.sum())


class OracleEmbedder:
    """Synthetic text embeddings: class prototype plus per-phrase noise.

    Prototypes are fixed random unit vectors per class; a phrase's embedding
    is its prototype plus Gaussian noise (keyed by the phrase text, so the
    embedding is stable regardless of iteration order), renormalized.
    """

    def __init__(self, num_classes: int, dim: int = DEFAULT_EMBED_DIM,
                 noise_sigma: float = DEFAULT_EMBED_NOISE, seed: int = 0):
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        self.num_classes = int(num_classes)
        self.dim = int(dim)
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        raw = Rng(self.seed).child("prototypes").generator.normal(
            size=(self.num_classes, self.dim)
        )
        self.prototypes = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    def _phrase_generator(self, text: str) -> np.random.Generator:
        digest = hashlib.blake2b(
            f"{self.seed}|{text}".encode("utf-8"), digest_size=8
        ).digest()
        return np.random.default_rng(int.from_bytes(digest, "little"))

    def embed(self, phrase: PhraseQuery) -> np.ndarray:
        if phrase.class_id is None:
            raise DataError(
                f"phrase {phrase.text!r} has no class_id; the oracle embedder only "
                "works on synthetic phrases (load a pool file instead)"
            )
        if not 0 <= phrase.class_id < self.num_classes:
            raise DataError(f"phrase {phrase.text!r}: class_id out of range")
        noise = self._phrase_generator(phrase.text).normal(size=self.dim)
        vec = self.prototypes[phrase.class_id] + self.noise_sigma * noise
        return vec / np.linalg.norm(vec)


def build_pool(records, embedder: OracleEmbedder) -> EmbeddingPool:
    """Collect unique caption phrases (first-seen order) and embed them."""
    phrases = []
    seen = set()
    for record in records:
        for phrase in record.caption:
            if phrase.text not in seen:
                seen.add(phrase.text)
                phrases.append(phrase)
    if len(phrases) < 2:
        raise DataError("dataset yields fewer than 2 unique phrases")
    embeddings = np.stack([embedder.embed(p) for p in phrases])
    return EmbeddingPool(phrases=tuple(phrases), embeddings=embeddings)


def cosine_sim(e1, e2) -> float:
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        raise DataError("cosine similarity is undefined for zero vectors")
    return float(e1 @ e2 / (n1 * n2))


def kmeans(pool: EmbeddingPool, n_c: int, seed: int, max_iters: int = 100) -> Clustering:
    """Lloyd's k-means with farthest-point seeding and lowest-index tie-breaks.

    Deterministic per seed: the first center is a uniform draw, each further
    center is the point farthest from the chosen set (np.argmax takes the
    lowest index on ties), and iteration stops when assignments are stable.
    """
    points = pool.embeddings
    p = points.shape[0]
    n_c = int(n_c)
    if not 1 <= n_c <= p:
        raise ConfigError(f"n_c must be in [1, {p}], got {n_c}")
    gen = Rng(seed).child("kmeans-init").generator

    first = int(gen.integers(p))
    chosen = [first]
    dist2 = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(n_c - 1):
        nxt = int(np.argmax(dist2))
        chosen.append(nxt)
        dist2 = np.minimum(dist2, ((points - points[nxt]) ** 2).sum(axis=1))
    centroids = points[chosen].copy()

    assignments = None
    history = []
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(p), new_assignments].sum()))
        if assignments is not None and np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for c in range(n_c):
            members = points[assignments == c]
            if len(members):  # empty clusters keep their previous centroid
                centroids[c] = members.mean(axis=0)
    return Clustering(
        n_c=n_c,
        assignments=assignments,
        centroids=centroids,
        inertia=history[-1],
        inertia_history=tuple(history),
    )


def _positive_indices(clip, pool: EmbeddingPool):
    positive_texts = {p.text for p in clip.caption}
    indices = []
    for text in positive_texts:
        if text not in pool.index:
            raise SamplingError(
                f"clip {clip.clip_id!r}: positive phrase {text!r} missing from pool"
            )
        indices.append(pool.index[text])
    return positive_texts, np.array(sorted(indices), dtype=int)


def _check_budget(clip, n: int):
    n = int(n)
    n_p = len(clip.caption)
    if n < n_p:
        raise SamplingError(
            f"clip {clip.clip_id!r}: n={n} is smaller than the {n_p} caption phrases"
        )
    return n, n_p


def _make_batch(clip, negatives) -> SampledBatch:
    phrases = tuple(clip.caption) + tuple(negatives)
    y = np.concatenate([np.ones(len(clip.caption)), np.zeros(len(negatives))])
    return SampledBatch(clip=clip, phrases=phrases, y=y)


def sample_random(clip, pool: EmbeddingPool, n: int, rng: Rng) -> SampledBatch:
    """Negatives drawn uniformly without replacement from pool minus positives."""
    n, n_p = _check_budget(clip, n)
    positive_texts, _ = _positive_indices(clip, pool)
    candidates = [i for i, ph in enumerate(pool.phrases) if ph.text not in positive_texts]
    need = n - n_p
    if len(candidates) < need:
        raise SamplingError(
            f"clip {clip.clip_id!r}: pool has only {len(candidates)} non-positive "
            f"phrases, cannot sample {need} negatives"
        )
    picked = rng.generator.choice(len(candidates), size=need, replace=False)
    return _make_batch(clip, [pool.phrases[candidates[i]] for i in picked])


def sample_similarity(clip, pool: EmbeddingPool, n: int, tau: float,
                      b: int = DEFAULT_CANDIDATE_BATCH, rng: Rng | None = None) -> SampledBatch:
    """Batched rejection sampling: keep candidates with max cosine to positives < tau."""
    if rng is None:
        raise ConfigError("sample_similarity requires an rng")
    if b < 1:
        raise ConfigError(f"candidate batch size must be >= 1, got {b}")
    n, n_p = _check_budget(clip, n)
    positive_texts, pos_idx = _positive_indices(clip, pool)
    # unit rows: cosine against each positive is one matmul
    max_sim = (pool.embeddings @ pool.embeddings[pos_idx].T).max(axis=1)

    remaining = [i for i, ph in enumerate(pool.phrases) if ph.text not in positive_texts]
    need = n - n_p
    chosen = []
    while len(chosen) < need:
        if not remaining:
            raise SamplingError(
                f"clip {clip.clip_id!r}: pool cannot supply {need} negatives under "
                f"tau={tau} (candidates exhausted)"
            )
        take = min(b, len(remaining))
        drawn = rng.generator.choice(len(remaining), size=take, replace=False)
        drawn_set = set(int(i) for i in drawn)
        for pos in drawn:
            i = remaining[int(pos)]
            if max_sim[i] < tau:
                chosen.append(i)
                if len(chosen) == need:
                    break
        remaining = [x for k, x in enumerate(remaining) if k not in drawn_set]
    return _make_batch(clip, [pool.phrases[i] for i in chosen])


def sample_clustering(clip, n: int, pool: EmbeddingPool, clustering: Clustering,
                      rng: Rng | None = None) -> SampledBatch:
    """Round-robin draws across clusters that contain no positive phrase.

    Every visit is an independent uniform draw from the cluster's members, so
    when the need wraps around small clusters a phrase can repeat; per-cluster
    visit counts still differ by at most one and the batch always carries
    exactly n - n_p negatives.
    """
    if rng is None:
        raise ConfigError("sample_clustering requires an rng")
    n, n_p = _check_budget(clip, n)
    _, pos_idx = _positive_indices(clip, pool)
    assignments = np.asarray(clustering.assignments)
    if assignments.size != len(pool):
        raise DataError("clustering does not cover this pool")
    positive_clusters = set(int(c) for c in assignments[pos_idx])
    members = {}
    for i, c in enumerate(assignments):
        members.setdefault(int(c), []).append(i)
    negative_clusters = [
        c for c in sorted(members) if c not in positive_clusters
    ]
    if not negative_clusters:
        raise SamplingError(
            f"clip {clip.clip_id!r}: every cluster contains a positive phrase"
        )
    # visiting order is freshly shuffled per call so the cyclic remainder
    # spreads across clusters over epochs
    order = list(negative_clusters)
    rng.generator.shuffle(order)
    chosen = []
    for j in range(n - n_p):
        bucket = members[order[j % len(order)]]
        chosen.append(bucket[int(rng.generator.integers(len(bucket)))])
    return _make_batch(clip, [pool.phrases[i] for i in chosen])


class NegativeSampler:
    """Strategy object handed to the estimator; wraps the sample_* functions."""

    def __init__(self, pool: EmbeddingPool, strategy: str = "random",
                 n: int = DEFAULT_NUM_PHRASES, tau: float = DEFAULT_TAU,
                 candidate_batch: int = DEFAULT_CANDIDATE_BATCH,
                 clustering: Clustering | None = None):
        if strategy not in SAMPLER_STRATEGIES:
            raise ConfigError(
                f"unknown sampling strategy {strategy!r}, "
                f"expected one of {SAMPLER_STRATEGIES}"
            )
        if strategy == "clustering" and clustering is None:
            raise ConfigError("clustering strategy needs a Clustering")
        self.pool = pool
        self.strategy = strategy
        self.n = int(n)
        self.tau = float(tau)
        self.candidate_batch = int(candidate_batch)
        self.clustering = clustering

    def sample(self, clip, rng: Rng) -> SampledBatch:
        if self.strategy == "random":
            return sample_random(clip, self.pool, self.n, rng)
        if self.strategy == "similarity":
            return sample_similarity(
                clip, self.pool, self.n, self.tau, self.candidate_batch, rng
            )
        return sample_clustering(clip, self.n, self.pool, self.clustering, rng)


def save_pool(pool: EmbeddingPool, path) -> Path:
    """One JSON header line, then the embedding matrix as little-endian f64."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": POOL_FORMAT,
        "version": 1,
        "count": len(pool),
        "embed_dim": pool.embed_dim,
        "phrases": [
            {"text": p.text, "tokens": list(p.tokens)} for p in pool.phrases
        ],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(pool.embeddings, dtype="<f8").tobytes())
    return path


def load_pool(path) -> EmbeddingPool:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pool file not found: {path}")
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path.name}: bad pool header ({exc})")
        if header.get("format") != POOL_FORMAT:
            raise DataError(f"{path.name}: not a {POOL_FORMAT} file")
        count = int(header["count"])
        dim = int(header["embed_dim"])
        buf = fh.read(count * dim * 8)
    if len(buf) != count * dim * 8:
        raise DataError(f"{path.name}: truncated embedding block")
    embeddings = np.frombuffer(buf, dtype="<f8").reshape(count, dim).copy()
    phrases = tuple(
        PhraseQuery(text=p["text"], tokens=p["tokens"]) for p in header["phrases"]
    )
    return EmbeddingPool(phrases=phrases, embeddings=embeddings)


def save_clustering(clustering: Clustering, pool: EmbeddingPool, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    assignments = {
        pool.phrases[i].text: int(c) for i, c in enumerate(clustering.assignments)
    }
    payload = {"n_c": clustering.n_c, "assignments": assignments}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
    return path


def load_clustering(path, pool: EmbeddingPool) -> Clustering:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"clustering file not found: {path}")
    payload = json.loads(path.read_text("utf-8"))
    try:
        by_text = payload["assignments"]
        n_c = int(payload["n_c"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path.name}: bad clustering file ({exc})")
    missing = [p.text for p in pool.phrases if p.text not in by_text]
    if missing:
        raise DataError(f"{path.name}: missing assignments for {missing[:3]}...")
    assignments = np.array([int(by_text[p.text]) for p in pool.phrases])
    return Clustering(n_c=n_c, assignments=assignments)
