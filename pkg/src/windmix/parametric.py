"""Parametric wind-speed densities fitted per class.

Gaussian and Gram-Charlier type-A densities cover the unimodal classes; a
two-component Weibull mixture covers the bimodal one. All fits are by
moment matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats
from scipy.special import gammaln

SQRT_2PI = np.sqrt(2.0 * np.pi)
K_BRACKET = (0.1, 50.0)


class DegenerateInputError(ValueError):
    pass


class NoSolutionError(ValueError):
    pass


class UnimodalInputError(ValueError):
    pass


class InconsistentFitError(ValueError):
    pass


def hermite(n: int, u):
    """Probabilists' Hermite polynomial ``He_n(u)`` for ``n`` in 0..4."""
    u = np.asarray(u, dtype=float)
    if n == 0:
        out = np.ones_like(u)
    elif n == 1:
        out = u
    elif n == 2:
        out = u * u - 1.0
    elif n == 3:
        out = u**3 - 3.0 * u
    elif n == 4:
        u2 = u * u
        out = u2 * u2 - 6.0 * u2 + 3.0
    else:
        raise ValueError(f"Hermite degree must be in 0..4, got {n}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GramCharlierParams:
    mean: float
    std: float
    skewness: float = 0.0
    kurtosis: float = 0.0  # excess

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be > 0")


def gram_charlier_pdf(params: GramCharlierParams, u):
    """Type-A density ``(1/sigma) [1 + s/6 He3(z) + k/24 He4(z)] phi(z)``.

    Can be negative for large ``|s|`` or ``|k|``; values are returned as
    computed.
    """
    z = (np.asarray(u, dtype=float) - params.mean) / params.std
    poly = 1.0 + params.skewness / 6.0 * hermite(3, z) + params.kurtosis / 24.0 * hermite(4, z)
    out = poly * np.exp(-0.5 * z * z) / (SQRT_2PI * params.std)
    return out if np.ndim(out) else float(out)


def gram_charlier_cdf(params: GramCharlierParams, u):
    z = (np.asarray(u, dtype=float) - params.mean) / params.std
    phi = np.exp(-0.5 * z * z) / SQRT_2PI
    out = stats.norm.cdf(z) - phi * (params.skewness / 6.0 * hermite(2, z) + params.kurtosis / 24.0 * hermite(3, z))
    return out if np.ndim(out) else float(out)


def gram_charlier_grid(params: GramCharlierParams, u) -> tuple[np.ndarray, bool]:
    """Batch evaluation plus a flag telling whether any value is negative."""
    values = np.atleast_1d(gram_charlier_pdf(params, u))
    return values, bool(np.any(values < 0))


def sample_moments(samples) -> tuple[float, float, float, float]:
    """Mean, std (n-1), skewness and excess kurtosis of ``samples``."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    if m2 <= 0 or np.all(x == x[0]):
        raise DegenerateInputError("samples have zero variance")
    std = float(np.sqrt(m2 * n / (n - 1)))
    skew = float(np.mean(dev**3) / m2**1.5)
    kurt = float(np.mean(dev**4) / m2**2 - 3.0)
    return mean, std, skew, kurt


def fit_gram_charlier(samples) -> GramCharlierParams:
    x = np.asarray(samples, dtype=float)
    if x.size < 4:
        raise ValueError("need at least 4 samples")
    return GramCharlierParams(*sample_moments(x))


def fit_gaussian(samples) -> GramCharlierParams:
    """Gaussian as the ``s = k = 0`` member of the Gram-Charlier family."""
    mean, std, _, _ = sample_moments(samples)
    return GramCharlierParams(mean, std)


def weibull_moments(c: float, k: float) -> tuple[float, float]:
    """Mean and variance of a Weibull law with scale ``c`` and shape ``k``."""
    if not (c > 0 and k > 0):
        raise ValueError("scale and shape must be > 0")
    g1 = np.exp(gammaln(1.0 + 1.0 / k))
    g2 = np.exp(gammaln(1.0 + 2.0 / k))
    return float(c * g1), float(c * c * (g2 - g1 * g1))


def _cv2(k: float) -> float:
    # squared coefficient of variation, decreasing in k
    return float(np.expm1(gammaln(1.0 + 2.0 / k) - 2.0 * gammaln(1.0 + 1.0 / k)))


def solve_weibull(mean: float, variance: float) -> tuple[float, float]:
    """Scale and shape reproducing ``mean`` and ``variance``.

    The shape is found by bracketed root finding on the squared coefficient
    of variation over ``K_BRACKET``.
    """
    if not (mean > 0 and variance > 0):
        raise ValueError("mean and variance must be > 0")
    target = variance / mean**2
    lo, hi = K_BRACKET
    cv_max, cv_min = np.sqrt(_cv2(lo)), np.sqrt(_cv2(hi))
    if not _cv2(hi) <= target <= _cv2(lo):
        raise NoSolutionError(
            f"coefficient of variation {np.sqrt(target):.4g} outside the attainable "
            f"range [{cv_min:.4g}, {cv_max:.4g}]"
        )
    k = optimize.brentq(lambda k: np.log(_cv2(k)) - np.log(target), lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    c = mean / np.exp(gammaln(1.0 + 1.0 / k))
    return float(c), float(k)


@dataclass(frozen=True)
class BiWeibullParams:
    p: float
    c1: float
    k1: float
    c2: float
    k2: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if min(self.c1, self.k1, self.c2, self.k2) <= 0:
            raise ValueError("scales and shapes must be > 0")


@dataclass(frozen=True)
class BiWeibullFit:
    params: BiWeibullParams
    antimode: float
    left: tuple[float, float]   # (mean, variance)
    right: tuple[float, float]
    variance_identity_residual: float


def _weibull_pdf(u, c, k):
    z = np.asarray(u, dtype=float) / c
    with np.errstate(divide="ignore"):
        return (k / c) * z ** (k - 1.0) * np.exp(-(z**k))


def _check_speed(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("wind speed must be >= 0")
    return u


def biweibull_pdf(params: BiWeibullParams, u):
    u = _check_speed(u)
    out = params.p * _weibull_pdf(u, params.c1, params.k1) + (1 - params.p) * _weibull_pdf(u, params.c2, params.k2)
    return out if np.ndim(out) else float(out)


def biweibull_cdf(params: BiWeibullParams, u):
    u = _check_speed(u)
    out = params.p * -np.expm1(-((u / params.c1) ** params.k1)) + (1 - params.p) * -np.expm1(
        -((u / params.c2) ** params.k2)
    )
    return out if np.ndim(out) else float(out)


def mixture_variance(p, mean1, var1, mean2, var2) -> float:
    """Variance of a two-component mixture by the law of total variance."""
    return p * var1 + (1 - p) * var2 + p * (1 - p) * (mean1 - mean2) ** 2


def weight_identity_variance(p, mean1, var1, mean2, var2) -> float:
    """Pooled variance in the form ``p(s1 - (p-1)(m1-m2)^2) - (p-1) s2``."""
    return p * (var1 - (p - 1) * (mean1 - mean2) ** 2) - (p - 1) * var2


def weight_from_means(mean, mean1, mean2) -> float:
    """Invert ``mean = p mean1 + (1-p) mean2`` for ``p``."""
    if mean1 == mean2:
        raise InconsistentFitError("component means coincide")
    return (mean - mean2) / (mean1 - mean2)


def find_antimode(samples, n_bins: int = 24, smooth_width: int = 3) -> float:
    """Lowest point of the smoothed histogram between its two highest peaks."""
    x = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(x, bins=n_bins)
    kernel = np.ones(smooth_width) / smooth_width
    padded = np.pad(counts.astype(float), smooth_width // 2, mode="edge")
    s = np.convolve(padded, kernel, mode="valid")
    left = np.r_[-np.inf, s[:-1]]
    right = np.r_[s[1:], -np.inf]
    peaks = np.flatnonzero((s > left) & (s >= right))
    if peaks.size < 2:
        raise UnimodalInputError("smoothed histogram has a single mode")
    a, b = sorted(peaks[np.argsort(s[peaks], kind="stable")[-2:]])
    if b - a < 2:
        raise UnimodalInputError("the two highest peaks are adjacent")
    m = a + 1 + int(np.argmin(s[a + 1:b]))
    if not s[m] < min(s[a], s[b]):
        raise UnimodalInputError("no dip between the two highest peaks")
    return float(0.5 * (edges[m] + edges[m + 1]))


def fit_biweibull(samples, n_bins: int = 24, smooth_width: int = 3) -> BiWeibullFit:
    """Moment-matched two-Weibull fit of a bimodal sample.

    The sample is split at the antimode, each side's mean and variance give
    that side's Weibull by :func:`solve_weibull`, and the weight follows from
    the pooled mean. The residual of the pooled-variance identity is reported
    relative to the pooled variance.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 20:
        raise ValueError("need at least 20 samples")
    if np.any(x < 0):
        raise ValueError("wind speeds must be >= 0")
    cut = find_antimode(x, n_bins, smooth_width)
    lo, hi = x[x < cut], x[x >= cut]
    if lo.size < 2 or hi.size < 2:
        raise UnimodalInputError("one side of the antimode holds fewer than 2 samples")
    m1, v1 = float(lo.mean()), float(lo.var(ddof=1))
    m2, v2 = float(hi.mean()), float(hi.var(ddof=1))
    p = weight_from_means(float(x.mean()), m1, m2)
    if not 0 < p < 1:
        raise InconsistentFitError(f"weight {p:.4g} outside (0, 1)")
    c1, k1 = solve_weibull(m1, v1)
    c2, k2 = solve_weibull(m2, v2)
    pooled = float(x.var(ddof=1))
    residual = abs(pooled - weight_identity_variance(p, m1, v1, m2, v2)) / pooled
    return BiWeibullFit(BiWeibullParams(p, c1, k1, c2, k2), cut, (m1, v1), (m2, v2), residual)
