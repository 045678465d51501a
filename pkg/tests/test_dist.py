import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fishersync.dist import (
    FamilyCatalog,
    Gaussian,
    GaussianMixture2,
    Logistic,
    NonConvergent,
    delta0,
    fisher_tightness,
    integrate,
    quadrature_fisher_information,
    quadrature_variance,
    spec_from_dict,
)

# mpmath (30 digits, adaptive tanh-sinh on the whole line), computed once and frozen
MIX_PDF0 = 0.107981933026376103901128400821
MIX_FI = 2.90244145934817897561914109106
MIX_DELTA = 3.62805182418522371952392636382
# asymmetric mixture w=0.3, offset=2, component variance 0.5
ASYM_FI = 1.51804304023424877664264913144
ASYM_VAR = 2.21428571428571428571428571429

MIX = GaussianMixture2(0.5, 1.0, 0.25)
ASYM = GaussianMixture2(0.3, 2.0, 0.5)


def test_pdf_reference_points():
    assert Gaussian(1.0).pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert Logistic(1.0).pdf(0.0) == pytest.approx(0.25, rel=1e-15)
    assert MIX.pdf(0.0) == pytest.approx(MIX_PDF0, rel=1e-14)


def test_pdf_against_scipy():
    from scipy import stats

    x = np.linspace(-30, 30, 601)
    assert np.allclose(Gaussian(2.5).pdf(x), stats.norm(scale=math.sqrt(2.5)).pdf(x), rtol=1e-12, atol=0)
    assert np.allclose(Logistic(0.7).pdf(x), stats.logistic(scale=0.7).pdf(x), rtol=1e-12, atol=1e-300)


def test_logistic_pdf_finite_far_out():
    p = Logistic(1.0).pdf(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(p)) and np.all(p >= 0)


@pytest.mark.parametrize("spec", [Gaussian(0.3), Logistic(1.7), MIX, ASYM])
def test_dpdf_matches_finite_difference(spec):
    x = np.linspace(-3, 3, 13)
    h = 1e-5
    fd = (spec.pdf(x + h) - spec.pdf(x - h)) / (2 * h)
    assert np.allclose(spec.dpdf(x), fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("spec", [Gaussian(0.3), Logistic(1.7), MIX, ASYM])
def test_score_is_log_derivative(spec):
    x = np.linspace(-4, 4, 17)
    logp, score = spec.log_pdf_and_score(x)
    assert np.allclose(np.exp(logp), spec.pdf(x), rtol=1e-12)
    assert np.allclose(score * spec.pdf(x), spec.dpdf(x), rtol=1e-10, atol=1e-15)


def test_variances():
    assert Gaussian(4.0).variance() == 4.0
    assert Logistic(1.0).variance() == pytest.approx(math.pi**2 / 3, rel=1e-15)
    assert MIX.variance() == pytest.approx(1.25, rel=1e-15)
    assert ASYM.variance() == pytest.approx(ASYM_VAR, rel=1e-14)


@pytest.mark.parametrize("spec", [Gaussian(4.0), Logistic(1.0), Logistic(3.0), MIX, ASYM])
def test_variance_cross_checked_by_quadrature(spec):
    assert quadrature_variance(spec) == pytest.approx(spec.variance(), rel=1e-9)


def test_fisher_information_values():
    assert Gaussian(1.0).fisher_information() == 1.0
    assert Gaussian(4.0).fisher_information() == 0.25
    assert Logistic(1.0).fisher_information() == pytest.approx(1 / 3, rel=1e-6)
    assert MIX.fisher_information() == pytest.approx(MIX_FI, rel=1e-6)
    assert ASYM.fisher_information() == pytest.approx(ASYM_FI, rel=1e-6)


@pytest.mark.parametrize("sigma_sq", [0.01, 1.0, 37.0])
def test_quadrature_matches_gaussian_closed_form(sigma_sq):
    spec = Gaussian(sigma_sq)
    assert quadrature_fisher_information(spec) == pytest.approx(1 / sigma_sq, rel=1e-6)


@pytest.mark.parametrize("scale", [0.05, 1.0, 20.0])
def test_quadrature_matches_logistic_closed_form(scale):
    assert Logistic(scale).fisher_information() == pytest.approx(1 / (3 * scale**2), rel=1e-6)


def test_tightness():
    assert fisher_tightness(Gaussian(7.0)) == pytest.approx(1.0, rel=1e-15)
    assert fisher_tightness(Logistic(1.0)) == pytest.approx(math.pi**2 / 9, rel=1e-6)
    assert fisher_tightness(MIX) == pytest.approx(MIX_DELTA, rel=1e-6)


def test_delta0():
    g = Gaussian(1.0)
    assert delta0(FamilyCatalog((g, Gaussian(3.0)), Gaussian(0.5))) == pytest.approx(1.0, rel=1e-15)
    assert FamilyCatalog((g, Logistic(1.0)), g).delta0() == pytest.approx(math.pi**2 / 9, abs=1e-4)
    assert delta0(FamilyCatalog((MIX,), g)) == pytest.approx(MIX_DELTA, rel=1e-6)


def test_delta0_includes_noise():
    cat = FamilyCatalog((Gaussian(1.0),), Logistic(1.0))
    assert cat.delta0() == pytest.approx(math.pi**2 / 9, rel=1e-6)


@pytest.mark.parametrize("spec", [Gaussian(0.2), Logistic(2.0), MIX, ASYM])
def test_normalized_and_centered(spec):
    mass = integrate(spec, spec.pdf, rel_tol=1e-12)
    first = integrate(spec, lambda x: x * spec.pdf(x), abs_tol=1e-14)
    assert abs(mass - 1) <= 1e-8
    assert abs(first) <= 1e-8 * spec.std


def test_sample_moments():
    rng = np.random.default_rng(11)
    g = Gaussian(1.0).sample(rng, 1_000_000)
    assert np.var(g, ddof=1) == pytest.approx(1.0, rel=0.01)
    lg = Logistic(1.0).sample(rng, 1_000_000)
    assert np.var(lg, ddof=1) == pytest.approx(math.pi**2 / 3, rel=0.02)
    m = ASYM.sample(rng, 1_000_000)
    assert abs(m.mean()) < 5 * math.sqrt(ASYM_VAR / 1e6)
    assert np.var(m, ddof=1) == pytest.approx(ASYM_VAR, rel=0.02)


@pytest.mark.parametrize("spec", [Gaussian(1.0), Logistic(1.0), MIX])
def test_sample_deterministic(spec):
    a = spec.sample(np.random.default_rng(5), 100)
    b = spec.sample(np.random.default_rng(5), 100)
    assert np.array_equal(a, b)


@pytest.mark.parametrize(
    "bad",
    [
        lambda: Gaussian(0.0),
        lambda: Gaussian(-1.0),
        lambda: Gaussian(math.inf),
        lambda: Logistic(0.0),
        lambda: GaussianMixture2(1.0, 1.0, 0.25),
        lambda: GaussianMixture2(0.5, 1.0, 0.0),
    ],
)
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_dict_round_trip():
    for spec in (Gaussian(2.0), Logistic(0.5), ASYM):
        assert spec_from_dict(spec.to_dict()) == spec
    cat = FamilyCatalog((MIX, Logistic(1.0)), Gaussian(0.25))
    assert FamilyCatalog.from_dict(cat.to_dict()) == cat


@pytest.mark.parametrize(
    "d",
    [
        {"kind": "cauchy", "scale": 1.0},
        {"kind": "gaussian", "variance": 1.0, "mean": 0.0},
        {"variance": 1.0},
    ],
)
def test_spec_from_dict_rejects(d):
    with pytest.raises(ValueError):
        spec_from_dict(d)


def test_integrate_reports_non_convergence():
    with pytest.raises(NonConvergent):
        # a discontinuous integrand never settles at 1e-15
        integrate(Gaussian(1.0), lambda x: np.sign(x - 0.1234567), rel_tol=1e-15)


positive = st.floats(min_value=1e-2, max_value=1e2)


@settings(max_examples=40, deadline=None)
@given(spec=st.one_of(
    positive.map(Gaussian),
    positive.map(Logistic),
    st.builds(
        GaussianMixture2,
        st.floats(min_value=0.05, max_value=0.95),
        st.floats(min_value=0.0, max_value=3.0),
        st.floats(min_value=0.05, max_value=2.0),
    ),
))
def test_tightness_at_least_one(spec):
    assert fisher_tightness(spec) >= 1.0 - 1e-6


@settings(max_examples=30, deadline=None)
@given(w=st.floats(0.05, 0.95), off=st.floats(0.0, 3.0), cv=st.floats(0.05, 2.0))
def test_mixture_normalized_and_centered(w, off, cv):
    spec = GaussianMixture2(w, off, cv)
    mass = integrate(spec, spec.pdf, rel_tol=1e-12)
    first = integrate(spec, lambda x: x * spec.pdf(x), abs_tol=1e-14)
    assert abs(mass - 1) <= 1e-8
    assert abs(first) <= 1e-8 * spec.std
