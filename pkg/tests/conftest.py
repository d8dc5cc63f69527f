import numpy as np
import pytest

import sysrisk as sr

BASE_SEED = 42


def base_market_config(d=2, n=20_000, seed=BASE_SEED, rho_xx=0.0, rho_ss=0.0, rho_x1s1=0.0):
    """Beta(2,5) positions with moment-matched lognormal eligibles (variance
    ratio 1/5), 15% / 10% expected returns."""
    mean, var = sr.beta_moments(2.0, 5.0)
    return sr.MarketConfig(
        positions=(sr.MarginalSpec.beta(2.0, 5.0),) * d,
        eligibles=(sr.MarginalSpec.lognormal_matching(mean, 0.2 * var),) * d,
        correlation=sr.build_correlation(d, rho_xx=rho_xx, rho_ss=rho_ss, rho_x1s1=rho_x1s1),
        n_scenarios=n,
        seed=seed,
    )


@pytest.fixture(scope="session")
def liab2():
    return sr.symmetric_liabilities(2, 0.6, 0.2)


@pytest.fixture(scope="session")
def agg2(liab2):
    return sr.AggregationSpec(liab2, 0.9)


@pytest.fixture(scope="session")
def es05():
    return sr.AcceptanceCriterion("es", 0.05)


@pytest.fixture(scope="session")
def market_small():
    """d=2 base market at N=5000 for cheap membership tests."""
    return sr.sample_market(base_market_config(n=5_000))


@pytest.fixture(scope="session")
def market_20k():
    """d=2 base market at the desk-scale N=20000."""
    return sr.sample_market(base_market_config(n=20_000))
