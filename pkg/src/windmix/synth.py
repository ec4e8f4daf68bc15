"""Synthetic wind-speed series and histogram populations with known truth.

Three regime shapes are available: symmetric unimodal (Gaussian), skewed
unimodal (shifted Weibull) and bimodal (two-Weibull mixture). A scenario
switches between regimes window by window following a Markov chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from windmix import dirichlet
from windmix.saem import MixtureModel
from windmix.sequence import simulate_chain
from windmix.windows import DEFAULT_WINDOW, TimeSeries, Window

FAMILIES = {
    "gaussian": ("mean", "std"),
    "skewed": ("loc", "scale", "shape"),
    "bimodal": ("p", "c1", "k1", "c2", "k2"),
}


@dataclass(frozen=True)
class RegimeSpec:
    family: str
    params: dict
    window_len: int = DEFAULT_WINDOW

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {sorted(FAMILIES)}")
        missing = set(FAMILIES[self.family]) - set(self.params)
        if missing:
            raise ValueError(f"{self.family} regime is missing {sorted(missing)}")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        p = self.params
        if self.family == "gaussian" and not p["std"] > 0:
            raise ValueError("std must be > 0")
        if self.family == "skewed" and not (p["loc"] >= 0 and p["scale"] > 0 and p["shape"] > 0):
            raise ValueError("skewed regime needs loc >= 0, scale > 0, shape > 0")
        if self.family == "bimodal" and not (0 < p["p"] < 1 and min(p["c1"], p["k1"], p["c2"], p["k2"]) > 0):
            raise ValueError("bimodal regime needs 0 < p < 1 and positive Weibull parameters")


# class shapes: calm symmetric, strong skewed, rare bimodal (pooled std ~1.98 m/s)
REFERENCE_REGIMES = (
    RegimeSpec("gaussian", {"mean": 8.0, "std": 0.67}),
    RegimeSpec("skewed", {"loc": 9.0, "scale": 1.45, "shape": 1.5}),
    RegimeSpec("bimodal", {"p": 0.5, "c1": 6.2, "k1": 8.0, "c2": 9.73, "k2": 10.0}),
)


def _draw(spec: RegimeSpec, rng: np.random.Generator, size: int) -> tuple[np.ndarray, int]:
    p = spec.params
    if spec.family == "gaussian":
        x = rng.normal(p["mean"], p["std"], size)
        clamped = int(np.count_nonzero(x < 0))
        return np.maximum(x, 0.0), clamped
    if spec.family == "skewed":
        return p["loc"] + p["scale"] * rng.weibull(p["shape"], size), 0
    left = rng.random(size) < p["p"]
    x = np.where(left, p["c1"] * rng.weibull(p["k1"], size), p["c2"] * rng.weibull(p["k2"], size))
    return x, 0


def sample_regime(spec: RegimeSpec, rng: np.random.Generator) -> Window:
    values, _ = _draw(spec, rng, spec.window_len)
    return Window(0, values, spec.window_len)


def sample_dirichlet_population(model: MixtureModel, n: int, rng: np.random.Generator):
    """Histograms drawn from ``model`` and their true 1-based labels."""
    labels = rng.choice(model.n_classes, size=n, p=model.weights)
    x = np.empty((n, model.n_bins))
    for k, comp in enumerate(model.components):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            x[idx] = dirichlet.sample(comp, rng, idx.size)
    return x, labels + 1


@dataclass(frozen=True)
class ScenarioSpec:
    regimes: tuple
    transition: np.ndarray
    n_windows: int
    seed: int = 0
    sample_period: float = 1.0
    start_time: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        K = len(self.regimes)
        if P.shape != (K, K):
            raise ValueError(f"transition matrix must be {K}x{K}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if len({r.window_len for r in self.regimes}) != 1:
            raise ValueError("all regimes must share one window length")
        object.__setattr__(self, "transition", P)

    @property
    def window_len(self) -> int:
        return self.regimes[0].window_len


@dataclass(frozen=True)
class Scenario:
    series: TimeSeries
    labels: np.ndarray
    clamp_rate: float = 0.0
    meta: dict = field(default_factory=dict)


def sample_scenario(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Scenario:
    """Regime chain plus the concatenated per-window speed samples."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    labels = simulate_chain(spec.transition, spec.n_windows, rng)
    W = spec.window_len
    values = np.empty(spec.n_windows * W)
    clamped = 0
    for k, regime in enumerate(spec.regimes, start=1):
        idx = np.flatnonzero(labels == k)
        if not idx.size:
            continue
        draws, c = _draw(regime, rng, idx.size * W)
        values.reshape(-1, W)[idx] = draws.reshape(-1, W)
        clamped += c
    t = spec.start_time + spec.sample_period * np.arange(values.size)
    return Scenario(TimeSeries(t, values), labels, clamped / values.size)


def reference_scenario(n_windows: int, seed: int = 0, transition=None, window_len: int = DEFAULT_WINDOW) -> ScenarioSpec:
    """Three-regime scenario (symmetric, skewed, bimodal)."""
    if transition is None:
        transition = [[0.80, 0.15, 0.05], [0.15, 0.75, 0.10], [0.10, 0.20, 0.70]]
    regimes = tuple(RegimeSpec(r.family, r.params, window_len) for r in REFERENCE_REGIMES)
    return ScenarioSpec(regimes, np.asarray(transition, dtype=float), n_windows, seed)
