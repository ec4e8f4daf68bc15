"""Time-ordered class labels: transitions and residence (run-length) times."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from windmix.gof import KsResult, ks_test

MIN_RUNS = 5


@dataclass(frozen=True)
class ClassSequence:
    """Labels in ``1..n_classes``, one per window, ``step_seconds`` apart."""

    labels: np.ndarray
    n_classes: int
    step_seconds: float = 600.0
    overlapping: bool = False

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D sequence")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
            labels = labels.astype(int)
        if labels.min() < 1 or labels.max() > self.n_classes:
            raise ValueError(f"labels must lie in 1..{self.n_classes}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_windows(cls, labels, n_classes: int, window_len: int, stride: int, sample_period: float = 1.0):
        """Sequence of window labels; overlapping windows (stride < window_len) are flagged."""
        return cls(labels, n_classes, stride * sample_period, stride < window_len)

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class TransitionMatrix:
    counts: np.ndarray
    probabilities: np.ndarray
    # 1-based classes never left (no outgoing transition); their rows stay zero
    empty_rows: tuple = ()


@dataclass(frozen=True)
class ResidenceSummary:
    runs: dict  # class -> run lengths in windows
    step_seconds: float = 600.0

    def seconds(self, k: int) -> np.ndarray:
        return self.runs[k] * self.step_seconds


@dataclass(frozen=True)
class ResidenceFit:
    n_runs: int
    mean_run: Optional[float] = None
    geometric_p: Optional[float] = None
    exp_rate: Optional[float] = None  # per second
    ks: Optional[KsResult] = None
    skipped: Optional[str] = None


def transition_matrix(seq: ClassSequence) -> TransitionMatrix:
    if len(seq) < 2:
        raise ValueError("need at least 2 labels to count transitions")
    K = seq.n_classes
    a = seq.labels[:-1] - 1
    b = seq.labels[1:] - 1
    counts = np.bincount(a * K + b, minlength=K * K).reshape(K, K)
    rows = counts.sum(axis=1)
    probs = np.zeros((K, K))
    live = rows > 0
    probs[live] = counts[live] / rows[live, None]
    return TransitionMatrix(counts, probs, tuple(int(k) + 1 for k in np.flatnonzero(~live)))


def run_lengths(labels) -> tuple[np.ndarray, np.ndarray]:
    """Values and lengths of the maximal constant runs of ``labels``."""
    labels = np.asarray(labels)
    starts = np.r_[0, np.flatnonzero(labels[1:] != labels[:-1]) + 1]
    lengths = np.diff(np.r_[starts, labels.size])
    return labels[starts], lengths


def residence_times(seq: ClassSequence) -> ResidenceSummary:
    values, lengths = run_lengths(seq.labels)
    runs = {k: lengths[values == k] for k in range(1, seq.n_classes + 1)}
    return ResidenceSummary(runs, seq.step_seconds)


def geometric_cdf(m, p: float):
    """``P(run <= m) = 1 - (1 - p)^floor(m)`` for run lengths ``m >= 1``."""
    m = np.floor(np.asarray(m, dtype=float))
    if p >= 1:
        return np.where(m < 1, 0.0, 1.0)
    return np.where(m < 1, 0.0, -np.expm1(np.maximum(m, 0.0) * np.log1p(-p)))


def fit_residence(summary: ResidenceSummary, min_runs: int = MIN_RUNS) -> dict:
    """Geometric fit of each class's run lengths, with a discrete K-S check.

    The success probability is ``1 / mean run``; the continuous-time reading
    is an exponential with rate ``1 / (mean run * step_seconds)``.
    """
    fits = {}
    for k, runs in summary.runs.items():
        if runs.size < min_runs:
            fits[k] = ResidenceFit(int(runs.size), skipped=f"fewer than {min_runs} runs")
            continue
        mean_run = float(runs.mean())
        p = 1.0 / mean_run
        ks = ks_test(runs, lambda m: geometric_cdf(m, p), lambda m: geometric_cdf(m - 1, p))
        fits[k] = ResidenceFit(
            int(runs.size), mean_run, p, 1.0 / (mean_run * summary.step_seconds), ks
        )
    return fits


def simulate_chain(transition, n_steps: int, rng: np.random.Generator, initial: Optional[int] = None) -> np.ndarray:
    """Labels (1-based) of a Markov chain with the given row-stochastic matrix."""
    P = np.asarray(transition, dtype=float)
    K = P.shape[0]
    if P.shape != (K, K) or np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("transition matrix must be square and row-stochastic")
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n_steps)
    state = int(rng.integers(K)) if initial is None else initial - 1
    out = np.empty(n_steps, dtype=int)
    out[0] = state
    for t in range(1, n_steps):
        state = int(np.searchsorted(cdf[state], u[t], side="right"))
        out[t] = state
    return out + 1


__all__ = [
    "ClassSequence", "TransitionMatrix", "ResidenceSummary", "ResidenceFit", "transition_matrix",
    "run_lengths", "residence_times", "geometric_cdf", "fit_residence", "simulate_chain",
]
