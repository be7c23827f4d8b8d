"""Per-point anomaly scores from forecast errors."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import model as M
from .pipeline import Series, make_windows


@dataclass
class ScoreTrace:
    scores: np.ndarray
    labels: np.ndarray
    covered_start: int  # first scorable position; earlier scores are 0 and not evaluated
    index_offset: int = 0  # series index of position 0

    def __post_init__(self):
        if len(self.scores) != len(self.labels):
            raise ValueError("scores and labels must have equal length")
        if np.any(self.scores < 0) or not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite and nonnegative")

    def covered(self):
        """``(scores, labels)`` restricted to the scorable range."""
        s = self.covered_start
        return self.scores[s:], self.labels[s:]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "score", "label"])
        for i, (s, lab) in enumerate(zip(self.scores, self.labels)):
            writer.writerow([i + self.index_offset, repr(float(s)), int(lab)])
        return buf.getvalue()


def score_series(params: M.ModelParams, series: Series, start=0) -> ScoreTrace:
    """Absolute one-step forecast error at every scorable index.

    ``start`` restricts the returned trace to ``series[start:]`` while still
    using the earlier points as forecast history.
    """
    norm = params.normalizer
    window_len = params.config.window_len
    first = window_len + norm.offset
    if len(series) <= first:
        raise ValueError(
            f"series of length {len(series)} is too short: need more than {first} points"
        )
    transformed = norm.transform(series)
    windows = make_windows(transformed, window_len)
    err = np.abs(M.predict(params, windows.inputs) - windows.targets)
    scores = np.zeros(len(series))
    scores[windows.origin_index + norm.offset] = err
    return ScoreTrace(
        scores[start:], series.labels[start:].copy(), max(first - start, 0), index_offset=start
    )


def threshold(trace: ScoreTrace, tau):
    """Binary predictions ``score >= tau`` over the covered range (zeros before it)."""
    if not np.isfinite(tau):
        raise ValueError("threshold must be finite")
    pred = (trace.scores >= tau).astype(np.int64)
    pred[: trace.covered_start] = 0
    return pred
