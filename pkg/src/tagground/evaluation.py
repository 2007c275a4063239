"""Event decoding, DTC/GTC matching, PSDS, and Th-AUC.

The evaluation contract: a prediction is one probability track per
(clip, caption-phrase) pair. For each threshold on a fixed 0.01-step grid the
track decodes into segments, segments match ground truth greedily by
descending intersection under the two intersection-ratio criteria
(intersection/pred >= rho and intersection/gt >= rho), and the pooled counts
yield one operating point per threshold:

- TPR  = total matches / total ground-truth events,
- FPR  = false positives per hour of evaluated audio, summed over classes
  (a class is a unique phrase text, and the per-class sum telescopes to
  total FP / hours).

PSDS is the normalized area under the monotone upper envelope of TPR vs FPR
up to ``e_max`` FP/hour; Th-AUC is the trapezoid area under micro-F1 vs
threshold. Both are reported on the x100 scale.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .synthdata import make_short_subset
from .validation import check_in_open_unit_interval, check_odd_window

THRESHOLD_GRID = tuple(i / 100 for i in range(1, 100))
SECONDS_PER_HOUR = 3600.0


@dataclass
class EvalConfig:
    rho: float = 0.5
    e_max: float = 800.0
    median_window: int = 1
    threshold_grid: tuple = THRESHOLD_GRID

    def validate(self) -> "EvalConfig":
        if not 0.0 < self.rho <= 1.0:
            raise DataError(f"rho must be in (0, 1], got {self.rho}")
        if not self.e_max > 0:
            raise DataError(f"e_max must be > 0, got {self.e_max}")
        check_odd_window(self.median_window)
        grid = tuple(float(t) for t in self.threshold_grid)
        if not grid or any(not 0.0 < t < 1.0 for t in grid) or list(grid) != sorted(set(grid)):
            raise DataError("threshold grid must be strictly increasing within (0, 1)")
        return self


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    tpr: float
    fpr: float


def median_filter(probs, window: int) -> np.ndarray:
    """Sliding median with edge replication; window=1 is the identity."""
    window = check_odd_window(window)
    probs = np.asarray(probs, dtype=np.float64)
    if window == 1:
        return probs.copy()
    padded = np.pad(probs, window // 2, mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, window), axis=1)


def decode_events(probs, threshold: float, hop_seconds: float) -> list:
    """Maximal runs of frames with prob > threshold, as (onset_s, offset_s)."""
    check_in_open_unit_interval(threshold, "threshold")
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.concatenate(([False], probs > threshold, [False]))
    edges = np.flatnonzero(mask[1:] != mask[:-1])
    return [
        (start * hop_seconds, end * hop_seconds)
        for start, end in zip(edges[0::2], edges[1::2])
    ]


def match_events(pred, gt, rho: float):
    """Greedy one-to-one matching by descending intersection; returns (tp, fp, fn).

    A (pred, gt) pair is matchable iff intersection/len(pred) >= rho and
    intersection/len(gt) >= rho. Ties in intersection break deterministically
    by (pred index, gt index).
    """
    candidates = []
    for i, (p_on, p_off) in enumerate(pred):
        for j, (g_on, g_off) in enumerate(gt):
            inter = min(p_off, g_off) - max(p_on, g_on)
            if inter <= 0:
                continue
            if inter / (p_off - p_on) >= rho and inter / (g_off - g_on) >= rho:
                candidates.append((inter, i, j))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_pred = set()
    used_gt = set()
    tp = 0
    for _, i, j in candidates:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
        tp += 1
    return tp, len(pred) - tp, len(gt) - tp


@dataclass(frozen=True)
class _Pair:
    clip_id: str
    phrase_text: str
    probs: np.ndarray
    gt: tuple
    hop_seconds: float
    duration: float


def _collect_pairs(predictions, records, config: EvalConfig) -> list:
    pairs = []
    missing = []
    for record in records:
        seen = set()
        for index, phrase in enumerate(record.caption):
            if phrase.text in seen:
                raise DataError(
                    f"clip {record.clip_id!r}: duplicate caption phrase "
                    f"{phrase.text!r} cannot be evaluated"
                )
            seen.add(phrase.text)
            key = (record.clip_id, phrase.text)
            if key not in predictions:
                missing.append(key)
                continue
            probs = np.asarray(predictions[key], dtype=np.float64)
            if probs.size != record.frames.num_frames:
                raise DataError(
                    f"prediction for {key!r} has {probs.size} frames, clip has "
                    f"{record.frames.num_frames}"
                )
            pairs.append(
                _Pair(
                    clip_id=record.clip_id,
                    phrase_text=phrase.text,
                    probs=median_filter(probs, config.median_window),
                    gt=tuple(record.events_for_phrase(index)),
                    hop_seconds=record.frames.hop_seconds,
                    duration=record.frames.duration_seconds,
                )
            )
    if missing:
        shown = ", ".join(f"{cid}/{text}" for cid, text in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise DataError(f"missing predictions for pairs: {shown}{more}")
    return pairs


def _pair_counts(pair: _Pair, grid, rho: float) -> np.ndarray:
    """(len(grid) x 3) tp/fp/fn counts for one pair across all thresholds."""
    counts = np.zeros((len(grid), 3), dtype=np.int64)
    for k, theta in enumerate(grid):
        pred = decode_events(pair.probs, theta, pair.hop_seconds)
        counts[k] = match_events(pred, pair.gt, rho)
    return counts


def _aggregate(pairs, counts_by_pair, config: EvalConfig):
    """Operating points and F1 per threshold from per-pair count matrices."""
    grid = config.threshold_grid
    total = np.zeros((len(grid), 3), dtype=np.int64)
    for counts in counts_by_pair:
        total += counts
    total_gt = sum(len(pair.gt) for pair in pairs)
    if total_gt == 0:
        raise DataError("evaluation set has zero ground-truth events")
    hours = sum({p.clip_id: p.duration for p in pairs}.values()) / SECONDS_PER_HOUR
    tp = total[:, 0].astype(float)
    fp = total[:, 1].astype(float)
    fn = total[:, 2].astype(float)
    points = [
        OperatingPoint(threshold=theta, tpr=tp[k] / total_gt, fpr=fp[k] / hours)
        for k, theta in enumerate(grid)
    ]
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return points, f1


def _upper_envelope(points) -> list:
    """Monotone non-decreasing upper envelope of TPR as a function of FPR."""
    ordered = sorted(points, key=lambda p: (p.fpr, -p.tpr))
    envelope = []
    best = -1.0
    for point in ordered:
        if point.tpr > best:
            envelope.append(point)
            best = point.tpr
    return envelope


def roc_points(predictions, records, config: EvalConfig | None = None) -> list:
    """Envelope operating points over the threshold grid (pooled counts)."""
    config = (config or EvalConfig()).validate()
    pairs = _collect_pairs(predictions, records, config)
    counts = [_pair_counts(p, config.threshold_grid, config.rho) for p in pairs]
    points, _ = _aggregate(pairs, counts, config)
    return _upper_envelope(points)


def psds(points, e_max: float = 800.0) -> float:
    """Normalized area under the step-interpolated envelope, x100.

    TPR(e) = max{tpr of points with fpr <= e}, held at the last envelope value
    beyond the final point; integration runs over e in [0, e_max].
    """
    if not points:
        raise DataError("psds needs at least one operating point")
    if e_max <= 0:
        raise DataError(f"e_max must be > 0, got {e_max}")
    envelope = _upper_envelope(points)
    area = 0.0
    prev_e = 0.0
    level = 0.0
    for point in envelope:
        if point.fpr > e_max:
            break
        if point.fpr > prev_e:
            area += (point.fpr - prev_e) * level
            prev_e = point.fpr
        level = point.tpr
    area += (e_max - prev_e) * level
    return 100.0 * area / e_max


def th_auc(predictions, records, config: EvalConfig | None = None) -> float:
    """Area under micro-F1 vs threshold over [0, 1], x100.

    F1 at the interval endpoints 0 and 1 is taken from the nearest grid
    thresholds; interior integration is trapezoidal on the grid.
    """
    config = (config or EvalConfig()).validate()
    pairs = _collect_pairs(predictions, records, config)
    counts = [_pair_counts(p, config.threshold_grid, config.rho) for p in pairs]
    _, f1 = _aggregate(pairs, counts, config)
    return _f1_area(f1, config.threshold_grid)


def _f1_area(f1: np.ndarray, grid) -> float:
    xs = np.concatenate(([0.0], np.asarray(grid), [1.0]))
    ys = np.concatenate(([f1[0]], f1, [f1[-1]]))
    return 100.0 * float(np.trapezoid(ys, xs))


def curve_data(predictions, records, config: EvalConfig | None = None,
               threads: int = 1):
    """Raw per-threshold operating points and micro-F1 for curve files.

    Returns ``(points, f1)`` where points keep grid order (no envelope) so
    the caller can write one row per threshold.
    """
    config = (config or EvalConfig()).validate()
    pairs = _collect_pairs(predictions, records, config)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(
                pool.map(lambda p: _pair_counts(p, config.threshold_grid, config.rho),
                         pairs)
            )
    else:
        counts = [_pair_counts(p, config.threshold_grid, config.rho) for p in pairs]
    return _aggregate(pairs, counts, config)


def evaluate(predictions, records, config: EvalConfig | None = None,
             threads: int = 1) -> dict:
    """Whole-set and short-subset PSDS / Th-AUC.

    Counts are computed once per (clip, phrase) pair and aggregated twice;
    subset metrics are ``None`` when no pair qualifies as short.
    """
    config = (config or EvalConfig()).validate()
    records = list(records)
    pairs = _collect_pairs(predictions, records, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(
                pool.map(lambda p: _pair_counts(p, config.threshold_grid, config.rho),
                         pairs)
            )
    else:
        counts = [_pair_counts(p, config.threshold_grid, config.rho) for p in pairs]

    def metrics(selected_pairs, selected_counts):
        points, f1 = _aggregate(selected_pairs, selected_counts, config)
        return psds(points, config.e_max), _f1_area(f1, config.threshold_grid)

    psds_whole, thauc_whole = metrics(pairs, counts)
    short = make_short_subset(records)
    short_idx = [
        i for i, p in enumerate(pairs) if (p.clip_id, p.phrase_text) in short
    ]
    if short_idx:
        psds_short, thauc_short = metrics(
            [pairs[i] for i in short_idx], [counts[i] for i in short_idx]
        )
    else:
        psds_short = thauc_short = None
    return {
        "psds_whole": psds_whole,
        "thauc_whole": thauc_whole,
        "psds_short": psds_short,
        "thauc_short": thauc_short,
    }
