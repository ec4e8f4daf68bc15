import numpy as np
import pytest
import sympy as sp
from numpy.polynomial import hermite_e
from scipy import integrate, stats

from windmix import parametric as P
from windmix.parametric import BiWeibullParams, GramCharlierParams


@pytest.mark.parametrize("n", range(5))
def test_hermite_matches_numpy(n):
    u = np.linspace(-4, 4, 33)
    coef = np.zeros(n + 1)
    coef[n] = 1
    np.testing.assert_allclose(P.hermite(n, u), hermite_e.hermeval(u, coef), atol=1e-12)


def test_hermite_degree_out_of_range():
    with pytest.raises(ValueError):
        P.hermite(5, 0.0)


def test_gram_charlier_reduces_to_gaussian():
    g = GramCharlierParams(8.0, 0.67)
    u = np.linspace(4, 12, 101)
    assert np.max(np.abs(P.gram_charlier_pdf(g, u) - stats.norm.pdf(u, 8.0, 0.67))) < 1e-12
    assert np.max(np.abs(P.gram_charlier_cdf(g, u) - stats.norm.cdf(u, 8.0, 0.67))) < 1e-12


def test_gram_charlier_moments_by_quadrature():
    g = GramCharlierParams(10.0, 1.5, skewness=0.3, kurtosis=0.4)

    def moment(r):
        return integrate.quad(lambda u: u**r * P.gram_charlier_pdf(g, u), -np.inf, np.inf, epsabs=1e-12)[0]

    m0, m1, m2 = moment(0), moment(1), moment(2)
    assert m0 == pytest.approx(1.0, abs=1e-6)
    assert m1 == pytest.approx(10.0, abs=1e-6)
    assert m2 - m1**2 == pytest.approx(1.5**2, abs=1e-6)
    c3 = integrate.quad(lambda u: (u - 10) ** 3 * P.gram_charlier_pdf(g, u), -np.inf, np.inf)[0]
    assert c3 / 1.5**3 == pytest.approx(0.3, abs=1e-6)


def test_gram_charlier_cdf_is_integral_of_pdf():
    g = GramCharlierParams(2.0, 0.5, 0.2, -0.3)
    for u in (1.0, 2.0, 2.7):
        val = integrate.quad(lambda v: P.gram_charlier_pdf(g, v), -np.inf, u)[0]
        assert P.gram_charlier_cdf(g, u) == pytest.approx(val, abs=1e-9)


def test_gram_charlier_negativity_flag():
    u = np.linspace(-5, 5, 201)
    _, neg = P.gram_charlier_grid(GramCharlierParams(0, 1, skewness=2.0), u)
    assert neg
    # any skewness turns the far tail negative; a mild one stays positive within 3 sigma
    inner = np.linspace(-3, 3, 61)
    values, neg = P.gram_charlier_grid(GramCharlierParams(0, 1, skewness=0.1), inner)
    assert not neg and values.shape == inner.shape
    assert P.gram_charlier_grid(GramCharlierParams(0, 1, skewness=0.1), u)[1]


def test_type_a_fit_on_gaussian_sample(rng):
    x = rng.normal(8.0, 0.67, 100_000)
    g = P.fit_gram_charlier(x)
    assert abs(g.skewness) < 0.03 and abs(g.kurtosis) < 0.06
    assert g.mean == pytest.approx(8.0, abs=0.01)


def test_sample_moments_match_scipy(rng):
    x = rng.gamma(3.0, 1.0, 5000)
    mean, std, s, k = P.sample_moments(x)
    assert std == pytest.approx(x.std(ddof=1))
    assert s == pytest.approx(stats.skew(x))
    assert k == pytest.approx(stats.kurtosis(x))


def test_degenerate_and_short_inputs():
    with pytest.raises(P.DegenerateInputError):
        P.fit_gaussian(np.full(10, 3.0))
    with pytest.raises(ValueError):
        P.fit_gram_charlier([1.0, 2.0, 3.0])


@pytest.mark.parametrize("c,k", [(1.0, 0.5), (6.2, 8.0), (9.73, 10.0), (3.0, 2.0), (12.0, 45.0)])
def test_weibull_moments_match_scipy(c, k):
    mean, var = P.weibull_moments(c, k)
    assert mean == pytest.approx(stats.weibull_min.mean(k, scale=c), rel=1e-12)
    assert var == pytest.approx(stats.weibull_min.var(k, scale=c), rel=1e-10)


def test_solve_weibull_round_trip(rng):
    for c, k in zip(rng.uniform(0.5, 20, 50), rng.uniform(0.3, 40, 50)):
        c2, k2 = P.solve_weibull(*P.weibull_moments(c, k))
        assert c2 == pytest.approx(c, rel=1e-6) and k2 == pytest.approx(k, rel=1e-6)


def test_solve_weibull_reports_unreachable_cv():
    with pytest.raises(P.NoSolutionError, match="attainable"):
        P.solve_weibull(1.0, 1e-8)
    with pytest.raises(ValueError):
        P.solve_weibull(-1.0, 1.0)


def test_biweibull_pdf_integrates_to_one():
    prm = BiWeibullParams(0.5, 6.2, 8.0, 9.73, 10.0)
    total = integrate.quad(lambda u: P.biweibull_pdf(prm, u), 0, np.inf, epsabs=1e-12, limit=200)[0]
    assert abs(total - 1) < 1e-8
    assert P.biweibull_cdf(prm, 7.0) == pytest.approx(
        integrate.quad(lambda u: P.biweibull_pdf(prm, u), 0, 7.0, epsabs=1e-12)[0], abs=1e-10
    )


def test_biweibull_rejects_negative_speed():
    prm = BiWeibullParams(0.5, 1.0, 2.0, 3.0, 2.0)
    with pytest.raises(ValueError):
        P.biweibull_pdf(prm, -0.1)
    assert P.biweibull_pdf(BiWeibullParams(1.0, 2.0, 1.0, 1.0, 1.0), 0.0) == pytest.approx(0.5)


def test_variance_identity_symbolically_equals_total_variance():
    p, m1, m2, v1, v2 = sp.symbols("p m1 m2 v1 v2")
    printed = p * (v1 - (p - 1) * (m1 - m2) ** 2) - (p - 1) * v2
    total = p * v1 + (1 - p) * v2 + p * (1 - p) * (m1 - m2) ** 2
    assert sp.simplify(printed - total) == 0


def test_variance_identity_against_brute_force_pooling(rng):
    a = rng.weibull(8.0, 3000) * 6.2
    b = rng.weibull(10.0, 7000) * 9.73
    pooled = np.concatenate([a, b]).var()
    p = a.size / (a.size + b.size)
    args = (p, a.mean(), a.var(), b.mean(), b.var())
    assert P.weight_identity_variance(*args) == pytest.approx(pooled, rel=1e-12)
    assert P.mixture_variance(*args) == pytest.approx(pooled, rel=1e-12)


def test_antimode_and_unimodal_rejection(rng):
    with pytest.raises(P.UnimodalInputError):
        P.find_antimode(rng.normal(8, 1, 20_000))
    x = np.r_[rng.normal(4, 0.5, 10_000), rng.normal(10, 0.5, 10_000)]
    assert 5 < P.find_antimode(x) < 9


def _bimodal(rng, p, c1, k1, c2, k2, n):
    left = rng.random(n) < p
    return np.where(left, c1 * rng.weibull(k1, n), c2 * rng.weibull(k2, n))


def test_biweibull_recovery_well_separated(rng):
    x = _bimodal(rng, 0.4, 5.0, 10.0, 11.0, 12.0, 100_000)
    f = P.fit_biweibull(x)
    assert f.params.p == pytest.approx(0.4, abs=0.05)
    assert f.params.c1 == pytest.approx(5.0, rel=0.05)
    assert f.params.c2 == pytest.approx(11.0, rel=0.05)
    assert f.variance_identity_residual < 1e-3


def test_biweibull_weight_tracks_mass_below_antimode(rng):
    # overlapping components: the split estimates the mass below the antimode, not p
    prm = BiWeibullParams(0.5, 6.2, 8.0, 9.73, 10.0)
    f = P.fit_biweibull(_bimodal(rng, 0.5, 6.2, 8.0, 9.73, 10.0, 100_000))
    assert f.params.p == pytest.approx(P.biweibull_cdf(prm, f.antimode), abs=0.01)


def test_fit_biweibull_rejects_unimodal(rng):
    with pytest.raises(P.UnimodalInputError):
        P.fit_biweibull(rng.weibull(2.0, 5000) * 8)
