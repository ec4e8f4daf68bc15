"""One-sample two-sided Kolmogorov-Smirnov test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

SERIES_EPS = 1e-10
# below this lambda the Kolmogorov survival function is 1 to double precision
LAMBDA_FLOOR = 0.2


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n: int
    p_value: Optional[float] = None


def ks_statistic(samples, cdf: Callable, cdf_left: Optional[Callable] = None) -> KsResult:
    """Largest distance between the empirical CDF and ``cdf``.

    ``cdf_left`` gives the left limit ``F(x-)`` for distributions with atoms
    (e.g. geometric run lengths); by default ``F`` is taken as continuous.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    f = np.asarray(cdf(x), dtype=float)
    f_left = f if cdf_left is None else np.asarray(cdf_left(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - f)), float(np.max(f_left - (i - 1) / n)))
    return KsResult(float(np.clip(d, 0.0, 1.0)), n)


def kolmogorov_sf(lam: float) -> float:
    """``Q(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2)``, clamped to [0, 1]."""
    if lam < LAMBDA_FLOOR:
        return 1.0
    total = 0.0
    sign = 1.0
    j = 1
    while True:
        term = 2.0 * np.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < SERIES_EPS:
            break
        sign = -sign
        j += 1
    return float(min(1.0, max(0.0, total)))


def ks_pvalue(d: float, n: int) -> float:
    """Asymptotic p-value with the small-sample scaling ``sqrt(n) + 0.12 + 0.11/sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= d <= 1.0:
        raise ValueError("D must lie in [0, 1]")
    rn = np.sqrt(n)
    return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)


def ks_test(samples, cdf: Callable, cdf_left: Optional[Callable] = None) -> KsResult:
    r = ks_statistic(samples, cdf, cdf_left)
    return KsResult(r.statistic, r.n, ks_pvalue(r.statistic, r.n))
