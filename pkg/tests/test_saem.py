import numpy as np
import pytest
from scipy import stats

from windmix import _parallel, saem
from windmix.saem import (
    MixtureModel,
    SaemConfig,
    SaemError,
    assign_classes,
    default_threshold,
    degeneracy_check,
    fit,
    gamma_schedule,
    log_likelihood,
    m_step,
    match_labels,
    responsibilities,
    stochastic_assign,
    stochastic_assign_matrix,
)
from windmix.synth import sample_dirichlet_population
from windmix.windows import smooth_histogram

from conftest import separated_model


def test_gamma_schedule_values():
    assert [gamma_schedule(q) for q in (0, 19, 20)] == [1.0, 1.0, 1.0]
    assert gamma_schedule(21) == pytest.approx(2 ** -0.6)
    assert gamma_schedule(119) == pytest.approx(100 ** -0.6)
    assert SaemConfig(stochastic=False).gamma(0) == 0.0


def test_default_threshold():
    assert default_threshold(5000, 3) == pytest.approx(0.0012)
    assert default_threshold(100, 2) == pytest.approx(0.005)
    assert default_threshold(10_000_000, 2) == pytest.approx(4e-7)


def test_config_validation():
    with pytest.raises(ValueError):
        SaemConfig(gamma_exponent=0.5)
    with pytest.raises(ValueError):
        SaemConfig(restart_threshold=1.0)
    with pytest.raises(ValueError):
        SaemConfig(init="kmeans")


def test_model_validation():
    with pytest.raises(ValueError):
        MixtureModel(([1.0, 1.0], [2.0, 2.0]), [0.5, 0.6])
    with pytest.raises(ValueError):
        MixtureModel(([1.0, 1.0], [2.0, 2.0, 2.0]), [0.5, 0.5])


def test_responsibilities_against_scipy_densities(rng):
    alphas = np.array([[2.0, 5.0, 1.0], [6.0, 1.5, 3.0]])
    model = MixtureModel(tuple(alphas), [0.3, 0.7])
    x = rng.dirichlet([2, 2, 2], size=10)
    t = responsibilities(model, x)
    for i in range(10):
        joint = np.array([w * stats.dirichlet.pdf(x[i], a) for w, a in zip(model.weights, alphas)])
        np.testing.assert_allclose(t[i], joint / joint.sum(), rtol=1e-10)
    ll = sum(np.log(sum(w * stats.dirichlet.pdf(xi, a) for w, a in zip(model.weights, alphas))) for xi in x)
    assert log_likelihood(model, x) == pytest.approx(ll, rel=1e-11)


def test_responsibilities_stable_for_extreme_densities():
    model = MixtureModel((np.full(12, 500.0), np.r_[np.full(6, 1e4), np.full(6, 1.0)]), [0.5, 0.5])
    x = smooth_histogram(np.r_[np.ones(6) / 6, np.zeros(6)][None, :], 1e-6)
    t = responsibilities(model, x)
    assert np.all(np.isfinite(t))
    np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-12)


def test_stochastic_assign_frequencies(rng):
    t_row = np.array([0.2, 0.5, 0.3])
    draws = np.array([np.argmax(stochastic_assign(t_row, rng)) for _ in range(20_000)])
    counts = np.bincount(draws, minlength=3)
    assert stats.chisquare(counts, t_row * draws.size).pvalue > 0.001


def test_draw_edges():
    t = np.array([[0.5, 0.5], [0.5, 0.5], [1 - 1e-17, 0.0]])
    e = stochastic_assign_matrix(t, np.array([0.0, 0.5, 1 - 1e-16]))
    np.testing.assert_array_equal(e, [[1, 0], [0, 1], [1, 0]])
    # scanning order only relabels which class the interval belongs to
    e = stochastic_assign_matrix(t[:2], np.array([0.0, 0.5]), order=np.array([1, 0]))
    np.testing.assert_array_equal(e, [[0, 1], [1, 0]])


def test_degeneracy_check_is_strict():
    e = np.zeros((10, 2))
    e[:9, 0] = 1
    e[9, 1] = 1
    assert not degeneracy_check(e, 0.1)
    assert degeneracy_check(e, 0.11)


def test_m_step_hard_assignment_is_per_class_mle(rng):
    model = separated_model([0.5, 0.5], n_bins=6)
    x, labels = sample_dirichlet_population(model, 400, rng)
    e = np.eye(2)[labels - 1]
    est = m_step(x, e, e, 1.0)
    np.testing.assert_allclose(est.weights, e.mean(axis=0))
    from windmix.dirichlet import mle_from_stats, sufficient_stats

    for k in range(2):
        own = mle_from_stats(sufficient_stats(x[labels == k + 1])).alpha
        np.testing.assert_allclose(est.components[k].alpha, own, rtol=1e-8)


def test_assign_and_match_labels():
    t = np.array([[0.1, 0.9], [0.6, 0.4], [0.5, 0.5]])
    np.testing.assert_array_equal(assign_classes(t), [2, 1, 1])
    perm, acc = match_labels([1, 1, 2, 3], [3, 3, 1, 2], 3)
    assert acc == 1.0
    np.testing.assert_array_equal(perm[np.array([3, 3, 1, 2]) - 1], [1, 1, 2, 3])


def _population(seed, weights=(0.6, 0.4), n=600):
    rng = np.random.default_rng(seed)
    return sample_dirichlet_population(separated_model(weights), n, rng)


def test_em_monotone_without_stochastic_step():
    for seed in range(5):
        x, _ = _population(seed)
        res = fit(x, SaemConfig(n_classes=2, stochastic=False, seed=seed, max_iter=200))
        assert np.min(np.diff(res.diagnostics.log_likelihood)) >= -1e-9


def test_fit_recovers_two_classes():
    x, labels = _population(3)
    res = fit(x, SaemConfig(n_classes=2, seed=1))
    _, acc = match_labels(labels, assign_classes(res.responsibilities), 2)
    assert acc > 0.98
    assert sorted(res.model.weights) == pytest.approx(sorted([np.mean(labels == 1), np.mean(labels == 2)]), abs=0.02)
    assert res.diagnostics.converged


def test_fit_single_class():
    x, _ = _population(4)
    res = fit(x, SaemConfig(n_classes=1))
    assert res.model.weights.tolist() == [1.0]
    np.testing.assert_array_equal(res.responsibilities, 1.0)


def test_fit_is_deterministic_for_a_seed():
    x, _ = _population(5)
    a = fit(x, SaemConfig(n_classes=2, seed=9))
    b = fit(x, SaemConfig(n_classes=2, seed=9))
    assert a.model.alphas.tobytes() == b.model.alphas.tobytes()
    assert a.responsibilities.tobytes() == b.responsibilities.tobytes()


def test_fit_bitwise_independent_of_threads(monkeypatch):
    monkeypatch.setattr(_parallel, "MIN_CHUNK", 50)
    x, _ = _population(6, n=500)
    one = fit(x, SaemConfig(n_classes=2, seed=2, threads=1))
    four = fit(x, SaemConfig(n_classes=2, seed=2, threads=4))
    assert one.model.alphas.tobytes() == four.model.alphas.tobytes()
    assert one.responsibilities.tobytes() == four.responsibilities.tobytes()
    assert one.diagnostics.log_likelihood == four.diagnostics.log_likelihood


def test_fit_equivariant_under_class_relabelling():
    x, labels = _population(7)
    init = labels - 1
    a = fit(x, SaemConfig(n_classes=2, seed=3), init_labels=init)
    b = fit(x, SaemConfig(n_classes=2, seed=3), init_labels=1 - init)
    np.testing.assert_array_equal(a.model.alphas, b.model.alphas[::-1])
    np.testing.assert_array_equal(a.responsibilities, b.responsibilities[:, ::-1])


def test_restart_budget_exhaustion_raises():
    x, _ = _population(8, n=100)
    with pytest.raises(SaemError) as info:
        fit(x, SaemConfig(n_classes=2, restart_threshold=0.9, max_restarts=3))
    assert info.value.diagnostics.restarts == 4


def test_fit_needs_n_at_least_k():
    x, _ = _population(9, n=2)
    with pytest.raises(ValueError):
        fit(x, SaemConfig(n_classes=3))


def test_unsmoothed_histograms_rejected():
    x = np.array([[0.5, 0.5, 0.0], [0.2, 0.3, 0.5]])
    with pytest.raises(saem.dirichlet.DirichletDomainError, match="bin 3"):
        fit(x, SaemConfig(n_classes=1))


def test_farthest_init_partitions_separated_data():
    x, labels = _population(10, weights=(0.5, 0.3, 0.2))
    init = saem.initial_labels(x, 3, np.random.default_rng(0), "farthest")
    _, acc = match_labels(labels, init + 1, 3)
    assert acc > 0.9
