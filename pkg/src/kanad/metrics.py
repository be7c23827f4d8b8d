"""Threshold-swept TSAD metrics: point-adjusted Best F1, Event F1,
k-delay F1 and AUPRC.

The per-threshold adjustment functions (:func:`point_adjust`,
:func:`k_delay_adjust`, :func:`event_collapse`) operate on binary
predictions. The sweep functions do not loop over thresholds; they reduce
each segment to the score that decides its detection and count everything
with sorted cumulative sums, so a full sweep costs O(n log n).
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np


class NoPositiveLabelsError(ValueError):
    """Recall is undefined because the evaluated range has no anomalies."""


class Segment(NamedTuple):
    start: int
    end: int  # exclusive


@dataclass(frozen=True)
class AdjustStrategy:
    kind: str  # "raw", "point_adjust", "event" or "k_delay"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("raw", "point_adjust", "event", "k_delay"):
            raise ValueError(f"unknown adjustment strategy {self.kind!r}")
        if self.kind == "k_delay" and self.k < 1:
            raise ValueError("k must be >= 1 for k-delay adjustment")

    @classmethod
    def raw(cls):
        return cls("raw")

    @classmethod
    def point_adjust(cls):
        return cls("point_adjust")

    @classmethod
    def event(cls):
        return cls("event")

    @classmethod
    def k_delay(cls, k=5):
        return cls("k_delay", k)


POINT_ADJUST = AdjustStrategy.point_adjust()
EVENT = AdjustStrategy.event()


def _pair(preds, labels):
    preds = np.asarray(preds).astype(np.int64)
    labels = np.asarray(labels).astype(np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"predictions length {preds.shape} != labels length {labels.shape}")
    return preds, labels


def extract_segments(labels):
    """Maximal runs of 1s as sorted ``Segment(start, end)`` pairs."""
    labels = np.asarray(labels).astype(np.int8)
    edges = np.diff(np.concatenate(([0], labels, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [Segment(int(s), int(e)) for s, e in zip(starts, ends)]


def point_adjust(preds, labels):
    """Fill every labeled segment that contains at least one predicted point."""
    preds, labels = _pair(preds, labels)
    out = preds.copy()
    for s, e in extract_segments(labels):
        if preds[s:e].any():
            out[s:e] = 1
    return out


def k_delay_adjust(preds, labels, k):
    """Credit a segment only if it is hit within ``k`` steps of its onset.

    A hit at ``start + d`` counts when ``d <= k``. Credited segments are
    filled; the rest are cleared. Points outside segments are untouched.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    preds, labels = _pair(preds, labels)
    out = preds.copy()
    for s, e in extract_segments(labels):
        out[s:e] = 1 if preds[s: min(e, s + k + 1)].any() else 0
    return out


def event_collapse(preds, labels):
    """Reduce to one event per labeled segment and per false-positive run.

    Returns ``(event_preds, event_labels)``: positive events first (in
    segment order) followed by one ``(pred=1, label=0)`` entry per maximal
    run of predicted points outside all segments.
    """
    preds, labels = _pair(preds, labels)
    ev_pred, ev_label = [], []
    for s, e in extract_segments(labels):
        ev_pred.append(int(preds[s:e].any()))
        ev_label.append(1)
    false_alarm = (preds == 1) & (labels == 0)
    for _ in extract_segments(false_alarm):
        ev_pred.append(1)
        ev_label.append(0)
    return np.array(ev_pred, dtype=np.int64), np.array(ev_label, dtype=np.int64)


def f1_from_counts(tp, fp, fn):
    """``(f1, precision, recall)``; zero wherever a denominator vanishes."""
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    return f1, precision, recall


# --------------------------------------------------------------------------
# threshold sweep
# --------------------------------------------------------------------------

def _count_at_least(values, thresholds, weights=None):
    """For each threshold, the (weighted) number of values >= it."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=np.float64)[order]
    idx = np.searchsorted(v, thresholds, side="left")
    if weights is None:
        return len(v) - idx
    w = np.asarray(weights, dtype=np.float64)[order]
    tail = np.concatenate((np.cumsum(w[::-1])[::-1], [0.0]))
    return tail[idx]


def _as_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"scores length {scores.shape} != labels length {labels.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not labels.any():
        raise NoPositiveLabelsError("no positive labels in the evaluated range; recall is undefined")
    return scores, labels


@dataclass
class Sweep:
    thresholds: np.ndarray  # descending, starting with +inf
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def f1(self):
        return f1_from_counts(self.tp, self.fp, self.fn)


def sweep(scores, labels, strategy: AdjustStrategy) -> Sweep:
    """Confusion counts at every candidate threshold (distinct scores and +inf)."""
    scores, labels = _as_arrays(scores, labels)
    thresholds = np.concatenate(([np.inf], np.unique(scores)[::-1]))
    normal = labels == 0
    segs = extract_segments(labels)
    seg_len = np.array([e - s for s, e in segs], dtype=np.float64)

    if strategy.kind == "raw":
        tp = _count_at_least(scores[~normal], thresholds)
        positives = float((~normal).sum())
    else:
        if strategy.kind == "k_delay":
            decisive = np.array([scores[s: min(e, s + strategy.k + 1)].max() for s, e in segs])
        else:
            decisive = np.array([scores[s:e].max() for s, e in segs])
        if strategy.kind == "event":
            tp = _count_at_least(decisive, thresholds)
            positives = float(len(segs))
        else:
            tp = _count_at_least(decisive, thresholds, weights=seg_len)
            positives = float(seg_len.sum())

    if strategy.kind == "event":
        # a false-positive run starts at a normal point whose predecessor is
        # not a predicted normal point; count starts as (#hits - #continuations)
        prev = np.full(len(scores), -np.inf)
        prev[1:] = np.where(normal[:-1], scores[:-1], -np.inf)
        hits = _count_at_least(scores[normal], thresholds)
        continued = _count_at_least(np.minimum(scores, prev)[normal], thresholds)
        fp = hits - continued
    else:
        fp = _count_at_least(scores[normal], thresholds)

    tp = np.asarray(tp, dtype=np.float64)
    return Sweep(thresholds, tp, np.asarray(fp, dtype=np.float64), positives - tp)


class BestF1(NamedTuple):
    f1: float
    threshold: float
    precision: float
    recall: float


def best_f1(scores, labels, strategy: AdjustStrategy = POINT_ADJUST) -> BestF1:
    """Maximum F1 over all thresholds; ties go to the largest threshold."""
    sw = sweep(scores, labels, strategy)
    f1, p, r = sw.f1()
    i = int(np.argmax(f1))  # thresholds are descending, so the first max is the largest
    return BestF1(float(f1[i]), float(sw.thresholds[i]), float(p[i]), float(r[i]))


def pr_curve(scores, labels, strategy: AdjustStrategy = POINT_ADJUST):
    """``(precision, recall, thresholds)`` at each finite candidate threshold, descending."""
    sw = sweep(scores, labels, strategy)
    _, p, r = sw.f1()
    return p[1:], r[1:], sw.thresholds[1:]


def auprc(scores, labels, strategy: AdjustStrategy = POINT_ADJUST):
    """Step-wise area under the PR curve: ``sum (R_k - R_{k-1}) * P_k``."""
    p, r, _ = pr_curve(scores, labels, strategy)
    dr = np.diff(np.concatenate(([0.0], r)))
    return float(np.sum(dr * p))


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    best_f1: float
    best_f1_threshold: float
    best_f1_precision: float
    best_f1_recall: float
    event_f1: float
    event_f1_threshold: float
    event_f1_precision: float
    event_f1_recall: float
    delay_f1: float
    delay_f1_threshold: float
    delay_f1_precision: float
    delay_f1_recall: float
    auprc: float
    delay_k: int = 5

    def to_dict(self):
        return asdict(self)

    def to_text(self):
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())

    def to_csv(self):
        d = self.to_dict()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(d))
        writer.writerow([_fmt(v) for v in d.values()])
        return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def evaluate(scores, labels, k=5, auprc_strategy: AdjustStrategy = POINT_ADJUST) -> EvalReport:
    pa = best_f1(scores, labels, POINT_ADJUST)
    ev = best_f1(scores, labels, EVENT)
    dl = best_f1(scores, labels, AdjustStrategy.k_delay(k))
    return EvalReport(
        *pa, *ev, *dl, auprc=auprc(scores, labels, auprc_strategy), delay_k=k
    )
