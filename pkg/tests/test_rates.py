import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from seqkrotov.rates import RateFitError, RateModel, fit_rate_model, log_error_model, rate_model


def direct_rate(n, r_star, r0):
    """Unsimplified expression, valid away from ``n = 0`` and ``r0 = r_star``."""
    d = r0 - r_star
    return r_star + 1.0 / n - d / np.expm1(n * d)


def planted(r_star, r0, scale, n_points=60):
    n = np.arange(n_points, dtype=float)
    return n, np.exp(log_error_model(n, r_star, r0, scale))


@pytest.mark.parametrize("r_star,r0", [(0.1, 0.5), (0.3, 0.05), (0.2, 0.2 + 1e-6)])
def test_limit_at_zero(r_star, r0):
    assert rate_model(0.0, r_star, r0) == pytest.approx(0.5 * (r0 + r_star), abs=1e-12)
    assert abs(rate_model(1e-9, r_star, r0) - 0.5 * (r0 + r_star)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 100), st.floats(0.0, 1.0), st.floats(0.01, 1.0))
def test_model_matches_direct_expression(n, r_star, d):
    assert rate_model(n, r_star, r_star + d) == pytest.approx(direct_rate(n, r_star, r_star + d), rel=1e-10, abs=1e-12)


def test_model_symmetric_and_asymptotic():
    n = np.array([1.0, 5.0, 50.0])
    assert np.allclose(rate_model(n, 0.1, 0.6), rate_model(n, 0.6, 0.1), rtol=1e-12)
    assert rate_model(500.0, 0.1, 0.6) == pytest.approx(0.1, abs=1e-2)


@pytest.mark.parametrize("r_star,r0", [(0.1, 0.5), (0.05, 0.02)])
def test_integrated_model_matches_quadrature(r_star, r0):
    a, b = 3.0, 7.0
    integral = quad(lambda t: rate_model(t, r_star, r0), a, b, epsabs=1e-13)[0]
    drop = log_error_model(a, r_star, r0, 0.0) - log_error_model(b, r_star, r0, 0.0)
    assert drop == pytest.approx(integral, abs=1e-10)


@pytest.mark.parametrize("r_star,r0,scale", [(0.1, 0.8, -1.0), (0.25, 0.05, 0.3), (0.02, 0.4, 2.0)])
def test_fit_recovers_planted_parameters(r_star, r0, scale):
    n, e = planted(r_star, r0, scale)
    fit = fit_rate_model(e)
    lo, hi = sorted((r_star, r0))
    assert abs(fit.r_star - lo) <= 1e-3
    assert abs(fit.r0 - hi) <= 1e-3
    assert fit.scale == pytest.approx(scale, abs=1e-6)
    assert fit.residual <= 1e-10


def test_fit_tolerates_noise():
    n, e = planted(0.15, 0.6, 0.0)
    noisy = e * np.exp(1e-3 * np.random.default_rng(0).standard_normal(e.size))
    fit = fit_rate_model(noisy)
    assert fit.r_star == pytest.approx(0.15, abs=0.02)


def test_fit_failures():
    with pytest.raises(RateFitError):
        fit_rate_model(np.full(20, 0.1))
    with pytest.raises(RateFitError):
        fit_rate_model(np.linspace(1, 0.5, 5))
    with pytest.raises(RateFitError):
        fit_rate_model(np.r_[np.linspace(1, 0.5, 15), 0.0])
    with pytest.raises(RateFitError):
        fit_rate_model(np.linspace(1, 0.5, 15), n=np.arange(15) * 2)


def test_estimator_round_trip():
    n, e = planted(0.1, 0.5, 0.0, 40)
    model = RateModel().fit(n, e)
    assert model.r_star_ == pytest.approx(0.1, abs=1e-3)
    assert np.allclose(model.predict(n), e, rtol=1e-6)
    assert model.rate([0.0])[0] == pytest.approx(0.3, abs=1e-3)
