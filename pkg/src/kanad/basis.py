"""Expansion of a raw window into a stack of fixed univariate functions.

The Fourier feature set stacks, per harmonic ``n = 1..N``:

* ``sin(n x), cos(n x)`` applied elementwise to the window values, and
* ``sin(2 pi n t / T), cos(2 pi n t / T)`` over within-window positions,

after an optional copy of the raw window. Taylor and Chebyshev bases can
replace the value-dependent rows for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class BasisKind(str, Enum):
    FOURIER = "fourier"
    TAYLOR = "taylor"
    CHEBYSHEV_I = "chebyshev1"
    CHEBYSHEV_II = "chebyshev2"


@dataclass(frozen=True)
class FeatureConfig:
    n_terms: int = 2
    window_len: int = 96
    basis: BasisKind = BasisKind.FOURIER
    include_x: bool = True
    include_s: bool = True
    include_p: bool = True

    def __post_init__(self):
        object.__setattr__(self, "basis", BasisKind(self.basis))
        if self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if not (self.include_x or self.include_s or self.include_p):
            raise ValueError("at least one of include_x/include_s/include_p must be set")

    @property
    def channels(self):
        return len(self.manifest())

    def manifest(self):
        """Row names of the feature matrix, in stacking order."""
        names = ["x"] if self.include_x else []
        for n in range(1, self.n_terms + 1):
            if self.include_s:
                if self.basis is BasisKind.FOURIER:
                    names += [f"sin({n}x)", f"cos({n}x)"]
                elif self.basis is BasisKind.TAYLOR:
                    names.append(f"x^{n}")
                elif self.basis is BasisKind.CHEBYSHEV_I:
                    names.append(f"T{n}(x)")
                else:
                    names.append(f"U{n}(x)")
            if self.include_p:
                names += [f"sin(2pi*{n}t/T)", f"cos(2pi*{n}t/T)"]
        return names


@dataclass(frozen=True)
class FeatureTensor:
    data: np.ndarray  # (channels, T) or (batch, channels, T)
    manifest: tuple

    @property
    def shape(self):
        return self.data.shape


def periodic_rows(n_terms, window_len):
    """``(2N, T)`` array of ``sin, cos(2 pi n t / T)`` rows, ``n = 1..N``."""
    t = np.arange(window_len, dtype=np.float64)
    rows = []
    for n in range(1, n_terms + 1):
        phase = 2.0 * np.pi * n * t / window_len
        rows += [np.sin(phase), np.cos(phase)]
    return np.array(rows)


def minmax_scale(windows):
    """Scale each window to ``[-1, 1]``; constant windows become zeros."""
    lo = windows.min(axis=-1, keepdims=True)
    hi = windows.max(axis=-1, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = 2.0 * (windows - lo) / safe - 1.0
    return np.where(span > 0, np.clip(scaled, -1.0, 1.0), 0.0)


def chebyshev_second_kind(x, n):
    """``U_n(x) = sin((n+1) arccos x) / sin(arccos x)`` with the endpoint limit."""
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    s = np.sin(theta)
    at_edge = np.abs(x) >= 1.0
    safe = np.where(at_edge, 1.0, s)
    interior = np.sin((n + 1) * theta) / safe
    edge = np.where(x > 0, 1.0, (-1.0) ** n) * (n + 1)
    return np.where(at_edge, edge, interior)


def _value_rows(windows, cfg, n):
    basis = cfg.basis
    if basis is BasisKind.FOURIER:
        return [np.sin(n * windows), np.cos(n * windows)]
    if basis is BasisKind.TAYLOR:
        # inputs are already z-scored by the preprocessing pipeline
        return [windows**n]
    scaled = minmax_scale(windows)
    if basis is BasisKind.CHEBYSHEV_I:
        return [np.cos(n * np.arccos(scaled))]
    return [chebyshev_second_kind(scaled, n)]


def expand(window, cfg: FeatureConfig) -> FeatureTensor:
    """Build the stacked feature matrix for one window or a ``(batch, T)`` array."""
    windows = np.asarray(window, dtype=np.float64)
    if windows.ndim not in (1, 2) or windows.shape[-1] != cfg.window_len:
        raise ValueError(
            f"expected window(s) of length {cfg.window_len}, got shape {windows.shape}"
        )
    if not np.all(np.isfinite(windows)):
        raise ValueError("window contains non-finite values")
    lead = windows.shape[:-1]
    periodic = periodic_rows(cfg.n_terms, cfg.window_len) if cfg.include_p else None
    rows = [windows] if cfg.include_x else []
    for n in range(1, cfg.n_terms + 1):
        if cfg.include_s:
            rows += _value_rows(windows, cfg, n)
        if cfg.include_p:
            for row in periodic[2 * (n - 1): 2 * n]:
                rows.append(np.broadcast_to(row, lead + row.shape))
    data = np.stack(rows, axis=-2)
    return FeatureTensor(data, tuple(cfg.manifest()))


def expand_alt(window, cfg: FeatureConfig) -> FeatureTensor:
    """Expansion with a Taylor or Chebyshev basis in the value rows.

    Same as :func:`expand`; kept as a named entry point for ablation code.
    """
    return expand(window, cfg)
