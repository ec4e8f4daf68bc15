"""Dirichlet distribution: density, sampling, moments and MLE inversion.

Histograms live on the probability simplex, so every observation handled
here is a length-L vector of non-negative proportions summing to one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, polygamma

logger = logging.getLogger(__name__)

ALPHA_MIN = 1e-8
ALPHA_MAX = 1e8
EULER_GAMMA = 0.5772156649015329

MLE_TOL = 1e-10
MLE_MAX_ITER = 500
SAMPLE_MAX_RETRIES = 100


class DirichletDomainError(ValueError):
    """Raised when an observation lies on the simplex boundary or off it."""


class MLEConvergenceError(RuntimeError):
    """Fixed-point MLE failed to converge; carries the last iterate."""

    def __init__(self, message, alpha, residual):
        super().__init__(message)
        self.alpha = alpha
        self.residual = residual


@dataclass(frozen=True)
class DirichletComponent:
    """Dirichlet parameter vector ``alpha`` with cached mass ``A = sum(alpha)``."""

    alpha: np.ndarray
    mass: float = field(init=False, repr=False)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ValueError("alpha must be a vector with at least 2 entries")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError(f"alpha entries must be finite and > 0, got {alpha}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mass", float(alpha.sum()))

    @property
    def n_bins(self) -> int:
        return self.alpha.size

    @property
    def mean(self) -> np.ndarray:
        return self.alpha / self.mass


@dataclass(frozen=True)
class SufficientStats:
    """Weighted average of ``log x`` per bin, plus the total weight behind it."""

    mean_log: np.ndarray
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "mean_log", np.asarray(self.mean_log, dtype=float))


def _as_simplex(x) -> np.ndarray:
    x = getattr(x, "proportions", x)
    return np.asarray(x, dtype=float)


def log_normalizer(alpha: np.ndarray) -> float:
    """``log Gamma(A) - sum log Gamma(alpha_l)``."""
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum())


def log_density(c: DirichletComponent, h) -> float:
    """Log density of ``c`` at a strictly positive simplex point ``h``."""
    x = _as_simplex(h)
    if x.shape != c.alpha.shape:
        raise ValueError(f"histogram has {x.size} bins, component has {c.n_bins}")
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        raise DirichletDomainError(
            f"bin {int(bad[0]) + 1} has proportion {x[bad[0]]!r}; smooth the histogram first"
        )
    return log_normalizer(c.alpha) + float(np.dot(c.alpha - 1.0, np.log(x)))


def log_density_matrix(alphas: np.ndarray, log_x: np.ndarray) -> np.ndarray:
    """Log densities for every (histogram, component) pair.

    Parameters
    ----------
    alphas : array (K, L)
    log_x : array (n, L)
        Elementwise log of strictly positive histograms.

    Returns
    -------
    array (n, K)
    """
    norm = gammaln(alphas.sum(axis=1)) - gammaln(alphas).sum(axis=1)
    # row-wise reduction instead of BLAS so results do not depend on chunking
    return np.einsum("il,kl->ik", log_x, alphas - 1.0) + norm


def sample(c: DirichletComponent, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from ``c`` by normalising independent Gamma(alpha_l, 1) variates.

    Rows whose gamma draws all underflow to zero (possible for tiny alpha) are
    redrawn up to ``SAMPLE_MAX_RETRIES`` times.
    """
    shape = (1 if size is None else size, c.n_bins)
    z = rng.standard_gamma(c.alpha, size=shape)
    total = z.sum(axis=1)
    for _ in range(SAMPLE_MAX_RETRIES):
        dead = total <= 0
        if not dead.any():
            break
        z[dead] = rng.standard_gamma(c.alpha, size=(int(dead.sum()), c.n_bins))
        total = z.sum(axis=1)
    else:
        if (total <= 0).any():
            raise FloatingPointError(
                f"gamma draws underflowed {SAMPLE_MAX_RETRIES} times for alpha={c.alpha}"
            )
    out = z / total[:, None]
    return out[0] if size is None else out


def marginal_beta(c: DirichletComponent, l: int) -> tuple[float, float]:
    """Beta parameters of the marginal of bin ``l`` (1-based)."""
    if not 1 <= l <= c.n_bins:
        raise IndexError(f"bin index {l} outside 1..{c.n_bins}")
    a = float(c.alpha[l - 1])
    return a, c.mass - a


def moments(c: DirichletComponent) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin means and variances."""
    a, m = c.alpha, c.mass
    return a / m, a * (m - a) / (m * m * (m + 1.0))


def posterior_update(c: DirichletComponent, counts) -> DirichletComponent:
    """Conjugate update of a Dirichlet prior by multinomial counts."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != c.alpha.shape:
        raise ValueError("counts must have one entry per bin")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    return DirichletComponent(c.alpha + counts)


def expected_log(c: DirichletComponent) -> np.ndarray:
    """``E[log X_l] = psi(alpha_l) - psi(A)``; the exact sufficient statistics of ``c``."""
    return digamma(c.alpha) - digamma(c.mass)


def sufficient_stats(histograms, weights=None) -> SufficientStats:
    """Weighted mean of ``log x`` over a set of strictly positive histograms."""
    x = np.atleast_2d(np.asarray(histograms, dtype=float))
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    total = float(w.sum())
    if total <= 0:
        raise ValueError("total weight must be positive")
    return SufficientStats((w @ np.log(x)) / total, total)


def inverse_digamma(y, newton_steps: int = 5) -> np.ndarray:
    """Solve ``psi(x) = y`` elementwise.

    Two-branch initial guess followed by Newton iterations; five steps reach
    full double precision across the range used here.
    """
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y + EULER_GAMMA))
    for _ in range(newton_steps):
        x = x - (digamma(x) - y) / polygamma(1, x)
    return x


def stats_residual(alpha: np.ndarray, mean_log: np.ndarray) -> float:
    return float(np.max(np.abs(digamma(alpha) - digamma(alpha.sum()) - mean_log)))


def _alpha_for_mass(mass: float, mean_log: np.ndarray) -> np.ndarray:
    return np.clip(inverse_digamma(digamma(mass) + mean_log), ALPHA_MIN, ALPHA_MAX)


def mle_from_stats(
    s: SufficientStats,
    init: DirichletComponent | None = None,
    tol: float = MLE_TOL,
    max_iter: int = MLE_MAX_ITER,
) -> DirichletComponent:
    """Maximum-likelihood alpha for the given mean-log statistics.

    The fixed-point map ``psi(alpha_new) = psi(sum alpha_old) + mean_log`` only
    depends on the old mass ``A``, so it reduces to the scalar map
    ``A -> sum_l psiinv(psi(A) + mean_log_l)``. Its fixed point is found with
    bracketed Newton steps; alpha is recovered by digamma inversion at every
    step. Converged once ``|delta alpha_l| < tol * max(1, alpha_l)`` for all l.

    Raises
    ------
    DirichletDomainError
        If any ``mean_log`` entry is non-finite or positive.
    MLEConvergenceError
        After ``max_iter`` steps without convergence.
    """
    mean_log = s.mean_log
    if s.weight <= 0:
        raise ValueError("sufficient statistics carry no weight")
    if not np.all(np.isfinite(mean_log)):
        raise DirichletDomainError("mean_log has non-finite entries; smooth the histograms first")
    if np.any(mean_log > 0):
        raise DirichletDomainError("mean_log entries must be <= 0")
    if init is not None and init.alpha.shape != mean_log.shape:
        raise ValueError("init component has the wrong number of bins")

    mass = float(mean_log.size) if init is None else init.mass
    lo, hi = 0.0, np.inf
    alpha = _alpha_for_mass(mass, mean_log)
    step = np.inf
    for it in range(1, max_iter + 1):
        gap = alpha.sum() - mass
        # gap > 0 below the fixed point, < 0 above it
        if gap > 0:
            lo = max(lo, mass)
        else:
            hi = min(hi, mass)
        slope = polygamma(1, mass) * np.sum(1.0 / polygamma(1, alpha)) - 1.0
        new_mass = mass - gap / slope if slope < 0 else np.nan
        if not lo < new_mass < hi:
            new_mass = np.sqrt(lo * hi) if np.isfinite(hi) and lo > 0 else (
                2.0 * mass if gap > 0 else 0.5 * mass
            )
        new_mass = float(np.clip(new_mass, ALPHA_MIN, ALPHA_MAX * mean_log.size))
        new = _alpha_for_mass(new_mass, mean_log)
        step = float(np.max(np.abs(new - alpha) / np.maximum(1.0, alpha)))
        alpha, mass = new, new_mass
        if step < tol:
            if np.any(alpha <= ALPHA_MIN) or np.any(alpha >= ALPHA_MAX):
                logger.info("Dirichlet MLE hit the alpha clamp [%g, %g]", ALPHA_MIN, ALPHA_MAX)
            return DirichletComponent(alpha)
    raise MLEConvergenceError(
        f"Dirichlet MLE did not converge in {max_iter} iterations (last step {step:.3g})",
        alpha,
        stats_residual(alpha, mean_log),
    )
