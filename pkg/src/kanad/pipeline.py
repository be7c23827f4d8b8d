"""Series ingestion, preprocessing, windowing, splitting and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class InputError(ValueError):
    """Base class for bad user-supplied data."""


class DataFileError(InputError):
    """The data file is missing, unreadable or lacks the requested column."""


class NonNumericValueError(InputError):
    pass


class LabelValueError(InputError):
    pass


@dataclass
class Series:
    values: np.ndarray
    labels: np.ndarray = None
    name: str = "series"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if self.labels is None:
            self.labels = np.zeros(len(self.values), dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != self.values.shape:
            raise ValueError(
                f"labels length {len(self.labels)} != values length {len(self.values)}"
            )

    def __len__(self):
        return len(self.values)

    def slice(self, start, stop):
        return Series(self.values[start:stop], self.labels[start:stop], self.name)


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------

_MISSING = {"", "nan", "NaN", "NAN", "null", "NULL", "None", "NA"}


def _parse_float(text, row):
    text = text.strip()
    if text in _MISSING:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise NonNumericValueError(f"row {row}: non-numeric value {text!r}") from None


def interpolate_missing(values):
    """Linearly interpolate NaNs; leading/trailing gaps take the nearest value."""
    values = np.asarray(values, dtype=np.float64).copy()
    missing = np.isnan(values)
    if missing.all():
        raise NonNumericValueError("series has no numeric values")
    if missing.any():
        idx = np.arange(len(values))
        values[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return values


def load_csv(path, value_column="value", label_column="label"):
    """Read a headed CSV into a :class:`Series`.

    Missing values are linearly interpolated. When ``label_column`` is absent
    from the header, labels default to zeros.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    if value_column not in header:
        raise DataFileError(f"{path}: missing column {value_column!r} (header: {header})")
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    values = [_parse_float(r[value_column] or "", i + 2) for i, r in enumerate(rows)]
    labels = None
    if label_column and label_column in header:
        labels = []
        for i, r in enumerate(rows):
            raw = (r[label_column] or "").strip()
            try:
                lab = float(raw)
            except ValueError:
                raise LabelValueError(f"row {i + 2}: label {raw!r} is not 0 or 1") from None
            if lab not in (0.0, 1.0):
                raise LabelValueError(f"row {i + 2}: label {raw!r} is not 0 or 1")
            labels.append(int(lab))
    return Series(interpolate_missing(values), labels, name=path.stem)


def save_csv(series: Series, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "label"])
        for v, lab in zip(series.values, series.labels):
            writer.writerow([repr(float(v)), int(lab)])


# --------------------------------------------------------------------------
# normalization and constant-term elimination
# --------------------------------------------------------------------------

def _stats(values):
    mean = float(np.mean(values))
    std = float(np.std(values))
    return mean, (std if std > 0 else 1.0)


def zscore(series):
    """Return ``(normalized, mean, std)``; a constant series maps to zeros.

    Accepts a :class:`Series` or a plain array and returns the same kind.
    """
    values = series.values if isinstance(series, Series) else np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot normalize an empty series")
    mean, std = _stats(values)
    out = (values - mean) / std
    if isinstance(series, Series):
        return replace(series, values=out), mean, std
    return out, mean, std


def denormalize(values, mean, std):
    return np.asarray(values, dtype=np.float64) * std + mean


def cte_difference(series):
    """First-order difference followed by re-normalization.

    Position ``t`` of the output holds ``in[t+1] - in[t]`` and carries the
    label of ``in[t+1]``.
    """
    if isinstance(series, Series):
        values, labels, name = series.values, series.labels, series.name
    else:
        values = np.asarray(series, dtype=np.float64)
        labels, name = np.zeros(len(values), dtype=np.int64), "series"
    if len(values) < 2:
        raise ValueError("differencing needs at least 2 points")
    diff = np.diff(values)
    out, _, _ = zscore(diff)
    return Series(out, labels[1:], name)


@dataclass(frozen=True)
class Normalizer:
    """Preprocessing statistics fitted on the training portion of a series."""

    mean: float = 0.0
    std: float = 1.0
    cte: bool = True
    diff_mean: float = 0.0
    diff_std: float = 1.0

    @property
    def offset(self):
        """Original index of transformed position 0."""
        return 1 if self.cte else 0

    @property
    def scale(self):
        """Size in original units of one transformed unit (a step change when CTE is on)."""
        return self.std * self.diff_std if self.cte else self.std

    @classmethod
    def fit(cls, train_values, cte=True):
        train_values = np.asarray(train_values, dtype=np.float64)
        mean, std = _stats(train_values)
        if not cte:
            return cls(mean, std, False)
        if len(train_values) < 2:
            raise ValueError("differencing needs at least 2 training points")
        dmean, dstd = _stats(np.diff((train_values - mean) / std))
        return cls(mean, std, True, dmean, dstd)

    def transform(self, series: Series) -> Series:
        z = (series.values - self.mean) / self.std
        if not self.cte:
            return Series(z, series.labels, series.name)
        if len(z) < 2:
            raise ValueError("differencing needs at least 2 points")
        d = (np.diff(z) - self.diff_mean) / self.diff_std
        return Series(d, series.labels[1:], series.name)


# --------------------------------------------------------------------------
# windows and splits
# --------------------------------------------------------------------------

@dataclass
class WindowSet:
    inputs: np.ndarray  # (num_windows, T)
    targets: np.ndarray
    target_labels: np.ndarray
    origin_index: np.ndarray

    def __len__(self):
        return len(self.targets)

    def select(self, mask):
        return WindowSet(
            self.inputs[mask], self.targets[mask], self.target_labels[mask], self.origin_index[mask]
        )


def make_windows(series, window_len) -> WindowSet:
    """One window per target index ``i`` in ``[T, len)``, covering ``[i-T, i)``."""
    if not isinstance(series, Series):
        series = Series(series)
    n = len(series)
    if n <= window_len:
        raise ValueError(f"series of length {n} is too short for window length {window_len}")
    inputs = sliding_window_view(series.values, window_len)[:-1]
    origin = np.arange(window_len, n)
    return WindowSet(
        np.ascontiguousarray(inputs), series.values[window_len:].copy(),
        series.labels[window_len:].copy(), origin,
    )


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.4
    val_frac: float = 0.1
    test_frac: float = 0.5

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ValueError("split fractions must be nonnegative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)}, expected 1")

    def boundaries(self, n):
        a = int(round(n * self.train_frac))
        b = int(round(n * (self.train_frac + self.val_frac)))
        for frac, size, name in (
            (self.train_frac, a, "train"),
            (self.val_frac, b - a, "validation"),
            (self.test_frac, n - b, "test"),
        ):
            if frac > 0 and size == 0:
                raise ValueError(f"{name} partition of a length-{n} series is empty")
        return a, b


def split(series: Series, spec: SplitSpec):
    """Contiguous ``(train, val, test)`` partition in time order."""
    a, b = spec.boundaries(len(series))
    return series.slice(0, a), series.slice(a, b), series.slice(b, len(series))


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    length: int = 20_000
    base_period: int = 48
    noise_std: float = 0.05
    anomaly_ratio: float = 0.01
    peak_magnitude: float = 0.4
    seed: int = 0
    anomaly_start: float = 0.0  # fraction of the series kept anomaly-free at the front
    trend_per_period: float = 0.0
    amplitude: float = 1.0


def inject_spikes(values, labels, ratio, magnitude, rng, start=0, stop=None, max_len=3):
    """Add non-overlapping peaks/drops of 1..max_len points inside ``[start, stop)``.

    The number of labeled points is ``round(ratio * (stop - start))``. Returns
    new ``(values, labels)`` arrays.
    """
    values = np.array(values, dtype=np.float64)
    labels = np.array(labels, dtype=np.int64)
    stop = len(values) if stop is None else stop
    span = stop - start
    total = int(round(ratio * span))
    if total == 0:
        return values, labels
    lengths = []
    while sum(lengths) < total:
        lengths.append(min(int(rng.integers(1, max_len + 1)), total - sum(lengths)))
    k = len(lengths)
    # one separator point after every segment so neighbours never merge
    free = span - total - k
    if free < 0:
        raise ValueError(
            f"anomaly ratio {ratio} is infeasible: {total} points in {k} segments "
            f"do not fit in {span} positions"
        )
    slots = np.sort(rng.choice(free + k, size=k, replace=False))
    signs = rng.choice([-1.0, 1.0], size=k)
    pos = start
    prev_slot = -1
    for slot, length, sign in zip(slots, lengths, signs):
        pos += slot - prev_slot - 1
        values[pos: pos + length] += sign * magnitude
        labels[pos: pos + length] = 1
        pos += length + 1
        prev_slot = slot
    return values, labels


def synthesize(spec: SynthSpec) -> Series:
    """Noisy sinusoid with injected short peaks and drops."""
    if spec.base_period < 4:
        raise ValueError("base_period must be >= 4")
    if spec.length < 10 * spec.base_period:
        raise ValueError("length must be at least 10 base periods")
    if not 0 <= spec.anomaly_ratio < 1:
        raise ValueError("anomaly_ratio must lie in [0, 1)")
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=np.float64)
    values = spec.amplitude * np.sin(2 * np.pi * t / spec.base_period)
    values += spec.trend_per_period * t / spec.base_period
    values += rng.normal(0.0, spec.noise_std, size=spec.length)
    labels = np.zeros(spec.length, dtype=np.int64)
    start = int(round(spec.anomaly_start * spec.length))
    values, labels = inject_spikes(
        values, labels, spec.anomaly_ratio, spec.peak_magnitude, rng, start=start
    )
    return Series(values, labels, name=f"synthetic_seed{spec.seed}")


# --------------------------------------------------------------------------
# multivariate handling
# --------------------------------------------------------------------------

def channels_to_instances(batch):
    """``(B, T, F)`` -> ``(B*F, T)``, rows ordered sample-major then feature."""
    batch = np.asarray(batch)
    b, t, f = batch.shape
    return batch.transpose(0, 2, 1).reshape(b * f, t)


def instances_to_channels(instances, n_features):
    instances = np.asarray(instances)
    bf, t = instances.shape
    return instances.reshape(bf // n_features, n_features, t).transpose(0, 2, 1)
