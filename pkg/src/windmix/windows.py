"""Windowing of a sampled speed series and per-window histograms/statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from windmix._parallel import map_row_chunks

DEFAULT_BINS = 12
DEFAULT_WINDOW = 600
DEFAULT_EPSILON = 1e-6


class EmptyInputError(ValueError):
    """Series too short to hold a single window."""


@dataclass(frozen=True)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("timestamps and values must be 1-D and of equal length")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("speeds must be finite and >= 0")
        if np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be non-decreasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def sample_period(self) -> float:
        """Median spacing between samples in seconds (1.0 for fewer than 2 samples)."""
        if self.values.size < 2:
            return 1.0
        return float(np.median(np.diff(self.timestamps)))


@dataclass(frozen=True)
class BinSpec:
    """Contiguous bins ``[e_l, e_{l+1})``; the last bin is closed on the right."""

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 3:
            raise ValueError("need at least 3 edges (2 bins)")
        if not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be finite and strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @classmethod
    def equal_width(cls, n_bins: int, lo: float, hi: float) -> "BinSpec":
        if n_bins < 2:
            raise ValueError("need at least 2 bins")
        if not hi > lo:
            raise ValueError(f"degenerate bin range [{lo}, {hi}]")
        return cls(np.linspace(lo, hi, n_bins + 1))

    @classmethod
    def from_series(cls, values, n_bins: int = DEFAULT_BINS) -> "BinSpec":
        """Equal-width bins spanning the observed range of ``values``."""
        v = np.asarray(values, dtype=float)
        return cls.equal_width(n_bins, float(v.min()), float(v.max()))


@dataclass(frozen=True)
class Window:
    start: int
    values: np.ndarray
    stride: int

    @property
    def window_len(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Histogram:
    proportions: np.ndarray
    count: int

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("proportions must lie in [0, 1] and sum to 1")
        object.__setattr__(self, "proportions", p)

    @property
    def n_bins(self) -> int:
        return self.proportions.size


@dataclass(frozen=True)
class WindowStats:
    """Summary moments of one window. ``None`` marks an undefined quantity."""

    mean: float
    std: float
    turbulence_intensity: Optional[float]
    skewness: Optional[float]
    kurtosis: Optional[float]


def count_windows(n_samples: int, window_len: int, stride: int) -> int:
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // stride + 1


def _check_window_args(window_len: int, stride: int):
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if stride < 1:
        raise ValueError("stride must be >= 1")


def window_matrix(values, window_len: int, stride: int) -> np.ndarray:
    """Read-only ``(n_windows, window_len)`` view of the windows of ``values``."""
    _check_window_args(window_len, stride)
    v = np.asarray(getattr(values, "values", values), dtype=float)
    if v.size < window_len:
        raise EmptyInputError(f"series has {v.size} samples, window needs {window_len}")
    return sliding_window_view(v, window_len)[::stride]


def slice_windows(series: TimeSeries, window_len: int = DEFAULT_WINDOW, stride: int = DEFAULT_WINDOW) -> list[Window]:
    mat = window_matrix(series, window_len, stride)
    return [Window(i * stride, row, stride) for i, row in enumerate(mat)]


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # out-of-range samples fall into the extreme bins
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, edges.size - 2)


def build_histogram(window, bins: BinSpec) -> Histogram:
    v = np.asarray(getattr(window, "values", window), dtype=float)
    if v.size == 0:
        raise ValueError("cannot histogram an empty window")
    counts = np.bincount(_bin_index(v, bins.edges), minlength=bins.n_bins)
    return Histogram(counts / v.size, int(v.size))


def histogram_matrix(windows: np.ndarray, bins: BinSpec, threads: int | None = None) -> np.ndarray:
    """Histograms of every row of a window matrix, shape ``(n_windows, L)``."""
    windows = np.asarray(windows, dtype=float)

    def chunk(rows):
        n, L = rows.shape[0], bins.n_bins
        idx = _bin_index(rows, bins.edges) + (np.arange(n) * L)[:, None]
        counts = np.bincount(idx.ravel(), minlength=n * L).reshape(n, L)
        return counts / rows.shape[1]

    return map_row_chunks(chunk, windows, threads)


def smooth_histogram(h, epsilon: float = DEFAULT_EPSILON):
    """Add ``epsilon`` pseudo-mass to every bin and renormalise.

    Accepts a :class:`Histogram` (returns one) or an ``(n, L)`` array of
    histograms (returns an array).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if isinstance(h, Histogram):
        return Histogram((h.proportions + epsilon) / (1.0 + h.n_bins * epsilon), h.count)
    x = np.asarray(h, dtype=float)
    return (x + epsilon) / (1.0 + x.shape[-1] * epsilon)


def window_stats(window) -> WindowStats:
    v = np.asarray(getattr(window, "values", window), dtype=float)
    n = v.size
    if n < 2:
        raise ValueError("window_stats needs at least 2 samples")
    mean = float(v.mean())
    if np.all(v == v[0]):
        return WindowStats(float(v[0]), 0.0, 0.0 if v[0] > 0 else None, None, None)
    dev = v - mean
    m2 = float(np.mean(dev**2))
    std = float(np.sqrt(m2 * n / (n - 1)))
    ti = std / mean if mean > 0 else None
    skew = float(np.mean(dev**3) / m2**1.5)
    kurt = float(np.mean(dev**4) / m2**2 - 3.0)
    return WindowStats(mean, std, ti, skew, kurt)


def window_stats_matrix(windows: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised mean / std (n-1) / turbulence intensity per window row."""
    w = np.asarray(windows, dtype=float)
    mean = w.mean(axis=1)
    std = w.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ti = np.where(mean > 0, std / mean, np.nan)
    return {"mean": mean, "std": std, "turbulence_intensity": ti}
