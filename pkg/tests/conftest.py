import numpy as np
import pytest

from windmix.saem import MixtureModel


def block_alpha(n_bins, lo, hi, base=2.0, boost=20.0):
    """Alpha vector with extra mass on bins ``lo..hi-1`` (0-based)."""
    a = np.full(n_bins, base)
    a[lo:hi] += boost
    return a


def separated_model(weights, n_bins=12):
    """K well-separated components: each concentrates on its own band of bins."""
    K = len(weights)
    width = n_bins // K
    comps = [block_alpha(n_bins, k * width, (k + 1) * width) for k in range(K)]
    return MixtureModel(tuple(comps), np.asarray(weights, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def record(number, passed, detail):
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
