import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windmix import _parallel
from windmix.windows import (
    BinSpec,
    EmptyInputError,
    Histogram,
    TimeSeries,
    build_histogram,
    count_windows,
    histogram_matrix,
    slice_windows,
    smooth_histogram,
    window_matrix,
    window_stats,
    window_stats_matrix,
)


def _series(values):
    values = np.asarray(values, dtype=float)
    return TimeSeries(np.arange(values.size, dtype=float), values)


def test_slice_non_overlapping_counts():
    s = _series(np.arange(1800) % 7)
    wins = slice_windows(s, 600, 600)
    assert len(wins) == 3
    assert [w.start for w in wins] == [0, 600, 1200]
    np.testing.assert_array_equal(wins[1].values, s.values[600:1200])


def test_slice_drops_trailing_partial_window():
    assert len(slice_windows(_series(np.ones(1799)), 600, 600)) == 2


def test_slice_overlapping_stride():
    assert len(slice_windows(_series(np.ones(1200)), 600, 300)) == 3
    assert count_windows(1200, 600, 300) == 3


def test_too_short_series_raises():
    with pytest.raises(EmptyInputError):
        slice_windows(_series(np.ones(599)), 600, 600)


def test_bad_window_arguments():
    with pytest.raises(ValueError):
        window_matrix(np.ones(10), 1, 1)
    with pytest.raises(ValueError):
        window_matrix(np.ones(10), 5, 0)


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries([0, 1], [1.0, -0.5])
    with pytest.raises(ValueError):
        TimeSeries([1, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        TimeSeries([0, 1], [1.0, np.nan])
    assert TimeSeries([0, 2, 4], [1, 1, 1]).sample_period == 2.0


def test_binspec_validation_and_properties():
    b = BinSpec.equal_width(4, 0.0, 8.0)
    np.testing.assert_allclose(b.edges, [0, 2, 4, 6, 8])
    np.testing.assert_allclose(b.centers, [1, 3, 5, 7])
    assert b.n_bins == 4
    with pytest.raises(ValueError):
        BinSpec([0.0, 1.0])
    with pytest.raises(ValueError):
        BinSpec([0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        BinSpec.equal_width(3, 1.0, 1.0)


def test_histogram_counts_by_hand():
    bins = BinSpec([0.0, 1.0, 2.0, 3.0])
    h = build_histogram([0.0, 0.5, 1.0, 2.5, 3.0, 2.9], bins)
    # 3.0 sits on the closed right edge of the last bin
    np.testing.assert_allclose(h.proportions, [2 / 6, 1 / 6, 3 / 6])
    assert h.count == 6


def test_out_of_range_values_clip_to_extreme_bins():
    bins = BinSpec([1.0, 2.0, 3.0])
    h = build_histogram([0.0, 5.0, 1.5, 2.5], bins)
    np.testing.assert_allclose(h.proportions, [0.5, 0.5])


def test_constant_window_is_one_hot():
    bins = BinSpec.equal_width(5, 0.0, 10.0)
    h = build_histogram(np.full(600, 4.2), bins)
    np.testing.assert_array_equal(h.proportions, [0, 0, 1, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 40, allow_nan=False), min_size=2, max_size=200), st.integers(2, 20))
def test_histogram_is_on_the_simplex(values, n_bins):
    bins = BinSpec.equal_width(n_bins, 0.0, 40.0)
    h = build_histogram(values, bins)
    assert np.all(h.proportions >= 0)
    assert abs(h.proportions.sum() - 1) < 1e-12


def test_histogram_matrix_matches_single_windows(rng):
    bins = BinSpec.equal_width(12, 0.0, 20.0)
    w = rng.uniform(0, 20, size=(30, 100))
    mat = histogram_matrix(w, bins)
    for i in (0, 7, 29):
        np.testing.assert_array_equal(mat[i], build_histogram(w[i], bins).proportions)


def test_histogram_matrix_thread_count_does_not_change_bits(rng, monkeypatch):
    monkeypatch.setattr(_parallel, "MIN_CHUNK", 8)
    bins = BinSpec.equal_width(12, 0.0, 20.0)
    w = rng.uniform(0, 20, size=(101, 60))
    one = histogram_matrix(w, bins, threads=1)
    four = histogram_matrix(w, bins, threads=4)
    assert one.tobytes() == four.tobytes()


def test_smoothing_formula_and_simplex():
    h = Histogram(np.array([1.0, 0.0, 0.0]), 10)
    s = smooth_histogram(h, 0.1)
    np.testing.assert_allclose(s.proportions, np.array([1.1, 0.1, 0.1]) / 1.3)
    assert np.all(s.proportions > 0)
    with pytest.raises(ValueError):
        smooth_histogram(h, 0.0)


def test_smoothing_matrix_rows_stay_on_simplex(rng):
    x = rng.dirichlet(np.ones(12), size=50)
    x[:, 3] = 0
    x /= x.sum(axis=1, keepdims=True)
    s = smooth_histogram(x, 1e-6)
    assert np.all(s > 0)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-14)


def test_window_stats_against_scipy(rng):
    from scipy import stats

    v = rng.gamma(4.0, 2.0, 600)
    ws = window_stats(v)
    assert ws.mean == pytest.approx(v.mean())
    assert ws.std == pytest.approx(v.std(ddof=1))
    assert ws.turbulence_intensity == pytest.approx(v.std(ddof=1) / v.mean())
    assert ws.skewness == pytest.approx(stats.skew(v))
    assert ws.kurtosis == pytest.approx(stats.kurtosis(v))


def test_window_stats_undefined_markers():
    const = window_stats(np.full(10, 3.0))
    assert const.std == 0.0 and const.skewness is None and const.kurtosis is None
    calm = window_stats(np.zeros(10))
    assert calm.turbulence_intensity is None


def test_window_stats_matrix_agrees_with_scalar(rng):
    w = rng.gamma(4.0, 2.0, size=(5, 200))
    m = window_stats_matrix(w)
    for i in range(5):
        ws = window_stats(w[i])
        assert m["std"][i] == pytest.approx(ws.std)
        assert m["turbulence_intensity"][i] == pytest.approx(ws.turbulence_intensity)
