"""Finite Dirichlet mixtures fitted by stochastic-approximation EM (SAEM).

Each iteration runs three steps on the population of smoothed histograms:

* stochastic step: draw one hard class per histogram from the current
  posterior probabilities, restarting from a fresh random partition if any
  class holds less than a fraction ``c(n)`` of the histograms;
* maximisation step: mix soft (posterior) and hard (drawn) class statistics
  with weight ``gamma_q`` to update mixing weights and per-class mean-log
  statistics, then recover each alpha by digamma inversion;
* estimation step: recompute the posterior class probabilities.

``gamma_q`` is 1 during burn-in and then decays to zero, so late iterations
are plain EM.

Random numbers follow a fixed counter scheme: the initial partition of
restart ``r`` uses ``SeedSequence(seed, spawn_key=(r, 0))`` and iteration
``q`` of that restart draws one uniform per histogram from
``SeedSequence(seed, spawn_key=(r, q + 1))``. Histogram ``i`` always
consumes uniform ``i``, so row-parallel evaluation reproduces the
sequential result exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from windmix import dirichlet
from windmix._parallel import map_row_chunks
from windmix.dirichlet import DirichletComponent, SufficientStats
from windmix.windows import BinSpec

logger = logging.getLogger(__name__)


class SaemError(RuntimeError):
    """Estimation failed (e.g. restart budget exhausted)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DegenerateClassError(SaemError):
    """A class lost all of its soft and hard mass."""


class ResponsibilityError(ValueError):
    """Posterior probabilities are undefined for some histogram."""


@dataclass(frozen=True)
class SaemConfig:
    n_classes: int = 2
    max_iter: int = 500
    gamma_burnin: int = 20
    gamma_exponent: float = 0.6
    # None selects min(0.005, 2K/n)
    restart_threshold: Optional[float] = None
    epsilon: float = 1e-6
    # relative plateau tolerance on the log-likelihood
    tol: float = 1e-9
    plateau_iters: int = 10
    plateau_gamma: float = 0.05
    max_restarts: int = 20
    seed: int = 0
    init: str = "random"
    stochastic: bool = True
    threads: Optional[int] = None

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.gamma_burnin < 0:
            raise ValueError("gamma_burnin must be >= 0")
        if not 0.5 < self.gamma_exponent <= 1.0:
            raise ValueError("gamma_exponent must lie in (0.5, 1]")
        if self.restart_threshold is not None and not 0 < self.restart_threshold < 1:
            raise ValueError("restart_threshold must lie in (0, 1)")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")
        if self.init not in ("random", "farthest"):
            raise ValueError(f"unknown init {self.init!r}")

    def gamma(self, q: int) -> float:
        if not self.stochastic:
            return 0.0
        return gamma_schedule(q, self.gamma_burnin, self.gamma_exponent)

    def threshold(self, n: int) -> float:
        if self.restart_threshold is not None:
            return self.restart_threshold
        return default_threshold(n, self.n_classes)


def gamma_schedule(q: int, burnin: int = 20, exponent: float = 0.6) -> float:
    """1 for ``q < burnin``, then ``(q - burnin + 1) ** -exponent``."""
    if q < burnin:
        return 1.0
    return float((q - burnin + 1) ** -exponent)


def default_threshold(n: int, n_classes: int) -> float:
    return min(0.005, 2.0 * n_classes / n)


@dataclass(frozen=True)
class MixtureModel:
    components: tuple
    weights: np.ndarray
    bins: Optional[BinSpec] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, DirichletComponent) else DirichletComponent(c) for c in self.components
        )
        w = np.array(self.weights, dtype=float)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if w.shape != (len(comps),):
            raise ValueError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {w}")
        if len({c.n_bins for c in comps}) != 1:
            raise ValueError("components disagree on the number of bins")
        if self.bins is not None and self.bins.n_bins != comps[0].n_bins:
            raise ValueError("bin spec does not match the components")
        w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def n_classes(self) -> int:
        return len(self.components)

    @property
    def n_bins(self) -> int:
        return self.components[0].n_bins

    @property
    def alphas(self) -> np.ndarray:
        return np.stack([c.alpha for c in self.components])

    @property
    def class_means(self) -> np.ndarray:
        """Mean histogram ``alpha / A`` of every class, shape ``(K, L)``."""
        return np.stack([c.mean for c in self.components])

    def permuted(self, order) -> "MixtureModel":
        """Model whose class ``j`` is this model's class ``order[j]``."""
        order = list(order)
        return replace(
            self,
            components=tuple(self.components[k] for k in order),
            weights=self.weights[order],
        )


@dataclass
class FitDiagnostics:
    log_likelihood: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    restarts: int = 0
    iterations: int = 0
    converged: bool = False
    threshold: float = 0.0


@dataclass
class FitResult:
    model: MixtureModel
    responsibilities: np.ndarray
    diagnostics: FitDiagnostics


def _as_matrix(histograms) -> np.ndarray:
    if isinstance(histograms, np.ndarray):
        x = histograms
    else:
        x = np.array([getattr(h, "proportions", h) for h in histograms], dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.ndim != 2:
        raise ValueError("histograms must form an (n, L) matrix")
    return x


def _log_histograms(x: np.ndarray) -> np.ndarray:
    if np.any(~(x > 0)):
        i, l = np.argwhere(~(x > 0))[0]
        raise dirichlet.DirichletDomainError(
            f"histogram {i} has proportion {x[i, l]!r} in bin {l + 1}; smooth histograms first"
        )
    return np.log(x)


def _estep(model: MixtureModel, log_x: np.ndarray, threads=None) -> tuple[np.ndarray, np.ndarray]:
    """Posterior matrix and per-histogram log mixture density."""
    if log_x.shape[1] != model.n_bins:
        raise ValueError(f"histograms have {log_x.shape[1]} bins, model has {model.n_bins}")
    alphas = model.alphas
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)

    def chunk(rows):
        joint = dirichlet.log_density_matrix(alphas, rows) + log_w
        norm = logsumexp(joint, axis=1)
        return np.column_stack([np.exp(joint - norm[:, None]), norm])

    out = map_row_chunks(chunk, log_x, threads)
    t, norm = out[:, :-1], out[:, -1]
    bad = np.flatnonzero(~np.isfinite(norm))
    if bad.size:
        raise ResponsibilityError(f"histogram {int(bad[0])} has zero likelihood under every class")
    return t, norm


def responsibilities(model: MixtureModel, histograms, threads=None) -> np.ndarray:
    """Posterior class probabilities ``t[i, k]``, computed in log space."""
    x = _as_matrix(histograms)
    t, _ = _estep(model, _log_histograms(x), threads)
    return t


def log_likelihood(model: MixtureModel, histograms, threads=None) -> float:
    """``sum_i log sum_k p_k D_k(h_i)``."""
    x = _as_matrix(histograms)
    _, norm = _estep(model, _log_histograms(x), threads)
    return float(np.sum(norm))


def stochastic_assign(t_row, rng: np.random.Generator) -> np.ndarray:
    """One-hot draw from the categorical distribution ``t_row``."""
    t_row = np.asarray(t_row, dtype=float)
    out = np.zeros_like(t_row)
    out[_draw(t_row[None, :], np.array([rng.random()]))[0]] = 1.0
    return out


def _draw(t: np.ndarray, u: np.ndarray, order=None) -> np.ndarray:
    """Inverse-CDF class draws; classes are scanned in ``order``."""
    K = t.shape[1]
    order = np.arange(K) if order is None else np.asarray(order)
    scanned = t[:, order]
    pos = (u[:, None] >= np.cumsum(scanned, axis=1)).sum(axis=1)
    short = np.flatnonzero(pos >= K)
    # cumulative sum fell a rounding error short of 1: take the last live class
    for i in short:
        pos[i] = np.flatnonzero(scanned[i] > 0)[-1]
    return order[pos]


def stochastic_assign_matrix(t: np.ndarray, u: np.ndarray, order=None) -> np.ndarray:
    """One-hot draws for every row of ``t`` using the uniforms ``u``."""
    labels = _draw(t, u, order)
    e = np.zeros_like(t)
    e[np.arange(t.shape[0]), labels] = 1.0
    return e


def degeneracy_check(assignments: np.ndarray, threshold: float) -> bool:
    """True when some class holds a fraction of histograms strictly below ``threshold``."""
    e = np.atleast_2d(assignments)
    n = e.shape[0]
    if n < 1:
        raise ValueError("need at least one assignment")
    return bool(np.any(e.sum(axis=0) / n < threshold))


def m_step(histograms, t: np.ndarray, e: np.ndarray, gamma_q: float, prev: Optional[MixtureModel] = None,
           log_x: Optional[np.ndarray] = None) -> MixtureModel:
    """Interpolated maximisation step.

    Weights and per-class mean-log statistics are ``(1 - gamma_q)`` times the
    posterior-weighted value plus ``gamma_q`` times the hard-assignment value;
    alpha then solves the Dirichlet likelihood equations for those statistics.
    """
    if not 0.0 <= gamma_q <= 1.0:
        raise ValueError("gamma_q must lie in [0, 1]")
    if log_x is None:
        log_x = _log_histograms(_as_matrix(histograms))
    n, K = t.shape
    soft_mass = t.sum(axis=0)
    hard_mass = e.sum(axis=0)
    weights = ((1.0 - gamma_q) * soft_mass + gamma_q * hard_mass) / n
    weights = weights / weights.sum()

    soft_sum = np.einsum("ik,il->kl", t, log_x)
    hard_sum = np.einsum("ik,il->kl", e, log_x)
    components = []
    for k in range(K):
        use_soft = gamma_q < 1.0 and soft_mass[k] > 0
        use_hard = gamma_q > 0.0 and hard_mass[k] > 0
        if use_soft and use_hard:
            mean_log = (1.0 - gamma_q) * soft_sum[k] / soft_mass[k] + gamma_q * hard_sum[k] / hard_mass[k]
        elif use_soft:
            mean_log = soft_sum[k] / soft_mass[k]
        elif use_hard:
            mean_log = hard_sum[k] / hard_mass[k]
        else:
            raise DegenerateClassError(f"class {k + 1} has no soft or hard mass")
        init = prev.components[k] if prev is not None else None
        stats = SufficientStats(np.minimum(mean_log, 0.0), max(weights[k], np.finfo(float).tiny))
        components.append(dirichlet.mle_from_stats(stats, init=init))
    bins = prev.bins if prev is not None else None
    meta = dict(prev.meta) if prev is not None else {}
    return MixtureModel(tuple(components), weights, bins, meta)


def assign_classes(t: np.ndarray) -> np.ndarray:
    """Hard labels in ``1..K``; ties go to the lowest class index."""
    return np.argmax(np.atleast_2d(t), axis=1) + 1


def _canonical_order(model: MixtureModel) -> np.ndarray:
    # scan classes in an order fixed by their parameters, not their labels,
    # so relabelling the classes relabels the fit and nothing else
    a = model.alphas
    return np.lexsort(a.T[::-1])


def _stream(seed: int, restart: int, counter: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart, counter)))


def initial_labels(x: np.ndarray, n_classes: int, rng: np.random.Generator, method: str = "random") -> np.ndarray:
    """Initial 0-based partition: uniform random, or seeded farthest-point (L1)."""
    n = x.shape[0]
    if method == "random":
        return rng.integers(n_classes, size=n)
    centers = [int(rng.integers(n))]
    dist = np.abs(x - x[centers[0]]).sum(axis=1)
    for _ in range(1, n_classes):
        centers.append(int(np.argmax(dist)))
        dist = np.minimum(dist, np.abs(x - x[centers[-1]]).sum(axis=1))
    d = np.stack([np.abs(x - x[c]).sum(axis=1) for c in centers], axis=1)
    return np.argmin(d, axis=1)


def fit(histograms, config: SaemConfig = SaemConfig(), bins: Optional[BinSpec] = None,
        init_labels=None) -> FitResult:
    """Fit a ``config.n_classes``-component Dirichlet mixture by SAEM.

    Parameters
    ----------
    histograms : array (n, L) or sequence of Histogram
        Strictly positive (smoothed) histograms.
    config : SaemConfig
    bins : BinSpec, optional
        Recorded on the returned model.
    init_labels : array of int in ``0..K-1``, optional
        Initial partition for the first run, replacing the random one.

    Raises
    ------
    SaemError
        When the restart budget is exhausted.
    """
    x = _as_matrix(histograms)
    log_x = _log_histograms(x)
    n, K = x.shape[0], config.n_classes
    if n < K:
        raise ValueError(f"need at least {K} histograms, got {n}")
    threshold = config.threshold(n)
    diag = FitDiagnostics(threshold=threshold)
    restart = 0

    while True:
        if restart == 0 and init_labels is not None:
            labels = np.asarray(init_labels, dtype=int)
        else:
            labels = initial_labels(x, K, _stream(config.seed, restart, 0), config.init)
        t = np.zeros((n, K))
        t[np.arange(n), labels] = 1.0
        model = None
        best = None
        stable = 0
        diag.log_likelihood, diag.gamma, diag.weights = [], [], []
        try:
            for q in range(config.max_iter):
                gamma_q = config.gamma(q)
                if config.stochastic:
                    u = _stream(config.seed, restart, q + 1).random(n)
                    order = None if model is None else _canonical_order(model)
                    e = stochastic_assign_matrix(t, u, order)
                    if degeneracy_check(e, threshold):
                        raise DegenerateClassError(
                            f"iteration {q}: a class fell below the restart threshold {threshold:.4g}"
                        )
                else:
                    e = t
                model = m_step(x, t, e, gamma_q, model, log_x=log_x)
                t, norm = _estep(model, log_x, config.threads)
                ll = float(np.sum(norm))
                prev_ll = diag.log_likelihood[-1] if diag.log_likelihood else None
                diag.log_likelihood.append(ll)
                diag.gamma.append(gamma_q)
                diag.weights.append(model.weights.tolist())
                diag.iterations = q + 1
                if best is None or ll > best[0]:
                    best = (ll, model, t)
                if prev_ll is not None and gamma_q < config.plateau_gamma and \
                        abs(ll - prev_ll) < config.tol * (1.0 + abs(ll)):
                    stable += 1
                else:
                    stable = 0
                if stable >= config.plateau_iters:
                    diag.converged = True
                    break
        except DegenerateClassError as exc:
            restart += 1
            diag.restarts = restart
            logger.info("restart %d: %s", restart, exc)
            if restart > config.max_restarts:
                raise SaemError(
                    f"restart budget of {config.max_restarts} exhausted: {exc}", diag
                ) from exc
            continue
        break

    if not diag.converged:
        logger.warning("SAEM stopped after %d iterations without reaching the plateau", diag.iterations)
        _, model, t = best
    meta = {
        "seed": config.seed,
        "iterations": diag.iterations,
        "restarts": diag.restarts,
        "converged": diag.converged,
        "final_log_likelihood": float(np.sum(_estep(model, log_x, config.threads)[1])),
    }
    model = replace(model, bins=bins, meta=meta)
    return FitResult(model, t, diag)


def match_labels(true_labels, pred_labels, n_classes: int) -> tuple[np.ndarray, float]:
    """Best relabelling of ``pred_labels`` (1-based) onto ``true_labels``.

    Returns the mapping ``perm`` (``perm[pred - 1]`` is the matched true label)
    and the resulting accuracy. Exhaustive over permutations, fine for small K.
    """
    from itertools import permutations

    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    best_perm, best_acc = None, -1.0
    for perm in permutations(range(1, n_classes + 1)):
        mapped = np.asarray(perm)[pred_labels - 1]
        acc = float(np.mean(mapped == true_labels))
        if acc > best_acc:
            best_perm, best_acc = np.asarray(perm), acc
    return best_perm, best_acc


__all__ = [
    "SaemConfig", "MixtureModel", "FitDiagnostics", "FitResult", "SaemError",
    "DegenerateClassError", "ResponsibilityError", "gamma_schedule", "default_threshold",
    "responsibilities", "log_likelihood", "stochastic_assign", "stochastic_assign_matrix",
    "degeneracy_check", "m_step", "assign_classes", "initial_labels", "fit", "match_labels",
]
