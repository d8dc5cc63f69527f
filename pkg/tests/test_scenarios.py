import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtri

import sysrisk as sr
from sysrisk.errors import DomainError, MatrixError, ValidationError

from conftest import base_market_config


def test_beta_moments_closed_forms():
    assert sr.beta_moments(1, 1) == (0.5, pytest.approx(1 / 12))
    mean, var = sr.beta_moments(2, 5)
    assert mean == pytest.approx(2 / 7)
    assert var == pytest.approx(10 / 392)
    assert sr.beta_moments(5, 5) == (0.5, pytest.approx(25 / 1100))


def test_beta_moments_domain():
    with pytest.raises(DomainError):
        sr.beta_moments(0.0, 1.0)
    with pytest.raises(DomainError):
        sr.beta_moments(1.0, -2.0)


def test_lognormal_params_from_moments_closed_form():
    mu, sigma = sr.lognormal_params_from_moments(1.0, 1e-12)
    assert sigma**2 == pytest.approx(1e-12, rel=1e-6)
    assert mu == pytest.approx(-5e-13, abs=1e-15)

    # base-model eligible asset: mean 2/7, variance 0.2 * 10/392
    mu, sigma = sr.lognormal_params_from_moments(2 / 7, 0.2 * 10 / 392)
    assert sigma**2 == pytest.approx(math.log(1.0625))
    assert mu == pytest.approx(math.log(2 / 7) - math.log(1.0625) / 2)
    # the inversion reproduces the moments exactly
    mean, var = sr.lognormal_moments(mu, sigma)
    assert mean == pytest.approx(2 / 7, rel=1e-12)
    assert var == pytest.approx(0.2 * 10 / 392, rel=1e-12)


def test_lognormal_params_domain():
    with pytest.raises(DomainError):
        sr.lognormal_params_from_moments(-1.0, 1.0)
    with pytest.raises(DomainError):
        sr.lognormal_params_from_moments(1.0, 0.0)


def test_lognormal_moments_monte_carlo_roundtrip():
    # independent oracle: 10^6 raw draws reproduce the target moments within 1%
    mu, sigma = sr.lognormal_params_from_moments(0.7, 0.05)
    rng = np.random.Generator(np.random.Philox(123))
    draws = np.exp(mu + sigma * rng.standard_normal(10**6))
    assert draws.mean() == pytest.approx(0.7, rel=0.01)
    assert draws.var() == pytest.approx(0.05, rel=0.01)


def test_inverse_cdf_uniform_identity():
    uni = sr.MarginalSpec.beta(1, 1)
    assert sr.inverse_cdf(uni, 0.3) == pytest.approx(0.3, abs=1e-12)


def test_inverse_cdf_lognormal_median():
    assert sr.inverse_cdf(sr.MarginalSpec.lognormal(0.0, 1.0), 0.5) == pytest.approx(1.0)


def test_inverse_cdf_beta_against_quadrature_oracle():
    # quadrature oracle: integrate the beta(2,5) density directly and invert
    a, b = 2.0, 5.0
    norm = quad(lambda t: t ** (a - 1) * (1 - t) ** (b - 1), 0.0, 1.0)[0]

    def cdf(x):
        return quad(lambda t: t ** (a - 1) * (1 - t) ** (b - 1), 0.0, x)[0] / norm

    for u in (0.1, 0.5, 0.9):
        oracle = brentq(lambda x: cdf(x) - u, 1e-12, 1 - 1e-12, xtol=1e-13)
        assert sr.inverse_cdf(sr.MarginalSpec.beta(a, b), u) == pytest.approx(
            oracle, abs=1e-10
        )


def test_inverse_cdf_domain():
    m = sr.MarginalSpec.beta(2, 5)
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(DomainError):
            sr.inverse_cdf(m, bad)


def test_inverse_cdf_vectorised_monotone():
    m = sr.MarginalSpec.beta(2, 5)
    u = np.linspace(0.01, 0.99, 199)
    x = sr.inverse_cdf(m, u)
    assert np.all(np.diff(x) > 0)
    assert np.all((x > 0) & (x < 1))


def test_sample_market_deterministic():
    cfg = base_market_config(n=2_000)
    m1 = sr.sample_market(cfg)
    m2 = sr.sample_market(cfg)
    assert np.array_equal(m1.xt.samples, m2.xt.samples)
    assert np.array_equal(m1.st.samples, m2.st.samples)
    m3 = sr.sample_market(cfg, seed=43)
    assert not np.array_equal(m1.xt.samples, m3.xt.samples)


def test_sample_market_nonnegative_and_shapes():
    m = sr.sample_market(base_market_config(n=1_000, rho_xx=0.3, rho_ss=0.2))
    assert m.xt.samples.shape == (1_000, 2)
    assert np.all(m.xt.samples >= 0)
    assert np.all(m.st.samples >= 0)


def test_sample_market_prices_from_returns():
    m = sr.sample_market(base_market_config(n=100))
    assert m.x0 == pytest.approx((2 / 7) / 1.15)
    assert m.s0 == pytest.approx((2 / 7) / 1.10)


@pytest.fixture(scope="module")
def market_1e5():
    return sr.sample_market(base_market_config(n=100_000, rho_xx=0.3, rho_x1s1=-0.2))


def test_marginal_fidelity_three_standard_errors(market_1e5):
    # empirical mean/variance within 3 Monte Carlo SEs of the closed forms
    n = market_1e5.n
    mean, var = sr.beta_moments(2, 5)
    for col in market_1e5.xt.samples.T:
        m4 = ((col - col.mean()) ** 4).mean()
        assert abs(col.mean() - mean) <= 3 * math.sqrt(var / n)
        assert abs(col.var() - var) <= 3 * math.sqrt((m4 - var**2) / n)
    lmu, lsig = sr.lognormal_params_from_moments(mean, 0.2 * var)
    lmean, lvar = sr.lognormal_moments(lmu, lsig)
    for col in market_1e5.st.samples.T:
        m4 = ((col - col.mean()) ** 4).mean()
        assert abs(col.mean() - lmean) <= 3 * math.sqrt(lvar / n)
        assert abs(col.var() - lvar) <= 3 * math.sqrt((m4 - lvar**2) / n)


def test_copula_fidelity_normal_scores(market_1e5):
    # map samples back to normal scores through the known marginals and
    # compare the empirical correlation with the requested matrix
    from scipy.special import betainc

    m = market_1e5
    mean, var = sr.beta_moments(2, 5)
    lmu, lsig = sr.lognormal_params_from_moments(mean, 0.2 * var)
    scores = np.empty((m.n, 4))
    for k in range(2):
        u = np.clip(betainc(2.0, 5.0, m.xt.samples[:, k]), 1e-12, 1 - 1e-12)
        scores[:, k] = ndtri(u)
        scores[:, 2 + k] = (np.log(m.st.samples[:, k]) - lmu) / lsig
    corr = np.corrcoef(scores, rowvar=False)
    target = sr.build_correlation(2, rho_xx=0.3, rho_x1s1=-0.2)
    assert np.max(np.abs(corr - target)) <= 0.02


def test_identity_correlation_near_zero():
    m = sr.sample_market(base_market_config(n=100_000))
    corr = np.corrcoef(np.column_stack([m.xt.samples, m.st.samples]), rowvar=False)
    off = corr - np.diag(np.diag(corr))
    assert np.max(np.abs(off)) <= 0.01


def test_base_model_return_targets():
    # expected returns of 15% (positions) and 10% (eligibles)
    m = sr.sample_market(base_market_config(n=100_000))
    for k in range(2):
        assert m.xt.samples[:, k].mean() == pytest.approx(2 / 7, rel=0.005)
        assert m.st.samples[:, k].mean() / m.s0[k] == pytest.approx(1.10, rel=0.005)


def test_validate_correlation_rejects_bad_matrices():
    with pytest.raises(ValidationError):
        sr.scenarios.validate_correlation(np.eye(3), 2)
    bad = sr.build_correlation(2)
    bad[0, 1] = 0.5  # asymmetric
    with pytest.raises(ValidationError):
        sr.scenarios.validate_correlation(bad, 2)
    sing = sr.build_correlation(2, rho_xx=1.0)
    with pytest.raises(MatrixError):
        sr.scenarios.validate_correlation(sing, 2)


def test_scenario_set_validation():
    with pytest.raises(ValidationError):
        sr.ScenarioSet(np.array([[0.1, -0.2]]))
    with pytest.raises(ValidationError):
        sr.ScenarioSet(np.empty((0, 2)))


def test_scenario_csv_roundtrip(tmp_path):
    m = sr.sample_market(base_market_config(n=50))
    path = tmp_path / "scen.csv"
    m.xt.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "scenario,asset_1,asset_2"
    back = sr.ScenarioSet.from_csv(path)
    assert np.array_equal(back.samples, m.xt.samples)  # 17 sig digits roundtrip


def test_market_config_json_roundtrip(tmp_path):
    cfg = base_market_config(n=500, rho_xx=0.25)
    path = tmp_path / "market.json"
    path.write_text(json.dumps(cfg.to_dict()))
    cfg2 = sr.MarketConfig.from_json(path)
    m1, m2 = sr.sample_market(cfg), sr.sample_market(cfg2)
    assert np.array_equal(m1.xt.samples, m2.xt.samples)
    assert np.array_equal(m1.st.samples, m2.st.samples)
