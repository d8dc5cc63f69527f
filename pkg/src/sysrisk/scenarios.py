"""Seeded generation of correlated terminal-value scenarios.

Positions have beta-distributed terminal values, eligible assets lognormal
ones; dependence enters through a Gaussian copula on the stacked vector
(X^1..X^d, S^1..S^d).  Sampling uses a counter-based Philox generator so a
(config, seed) pair pins the output bit-for-bit and blocks of scenarios
could be generated independently.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import betainc, betaln, ndtr, ndtri

from .errors import DomainError, MatrixError, NumericalError, ValidationError

__all__ = [
    "MarginalSpec",
    "ScenarioSet",
    "MarketModel",
    "MarketConfig",
    "beta_moments",
    "lognormal_moments",
    "lognormal_params_from_moments",
    "inverse_cdf",
    "build_correlation",
    "validate_correlation",
    "sample_market",
]

_ROOT_FIND_MAX_ITER = 200
_ROOT_FIND_TOL = 1e-12


def beta_moments(a: float, b: float) -> tuple[float, float]:
    """Mean and variance of a beta(a, b) distribution."""
    if a <= 0 or b <= 0:
        raise DomainError(f"beta shape parameters must be positive, got a={a}, b={b}")
    mean = a / (a + b)
    variance = a * b / ((a + b) ** 2 * (a + b + 1))
    return mean, variance


def lognormal_moments(mu: float, sigma: float) -> tuple[float, float]:
    """Mean and variance of a lognormal(mu, sigma^2) distribution."""
    if sigma <= 0:
        raise DomainError(f"lognormal sigma must be positive, got {sigma}")
    mean = np.exp(mu + sigma**2 / 2.0)
    variance = (np.exp(sigma**2) - 1.0) * np.exp(2.0 * mu + sigma**2)
    return float(mean), float(variance)


def lognormal_params_from_moments(mean: float, variance: float) -> tuple[float, float]:
    """Invert the lognormal moment map: find (mu, sigma) matching mean/variance."""
    if mean <= 0 or variance <= 0:
        raise DomainError(
            f"moment matching needs mean > 0 and variance > 0, got ({mean}, {variance})"
        )
    sigma2 = np.log1p(variance / mean**2)
    mu = np.log(mean) - sigma2 / 2.0
    return float(mu), float(np.sqrt(sigma2))


@dataclass(frozen=True)
class MarginalSpec:
    """Terminal-value distribution of a single asset.

    kind is "beta" (params (a, b), support [0, 1]) or "lognormal"
    (params (mu, sigma), support (0, inf)).
    """

    kind: str
    params: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("beta", "lognormal"):
            raise ValidationError(f"unknown marginal kind {self.kind!r}")
        a, b = self.params
        if self.kind == "beta":
            if a <= 0 or b <= 0:
                raise DomainError(f"beta(a, b) needs a, b > 0, got ({a}, {b})")
        else:
            if b <= 0:
                raise DomainError(f"lognormal sigma must be positive, got {b}")
        object.__setattr__(self, "params", (float(a), float(b)))

    @classmethod
    def beta(cls, a: float, b: float) -> "MarginalSpec":
        return cls("beta", (a, b))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "MarginalSpec":
        return cls("lognormal", (mu, sigma))

    @classmethod
    def lognormal_matching(cls, mean: float, variance: float) -> "MarginalSpec":
        """Lognormal marginal calibrated to a target mean and variance."""
        return cls("lognormal", lognormal_params_from_moments(mean, variance))

    def moments(self) -> tuple[float, float]:
        if self.kind == "beta":
            return beta_moments(*self.params)
        return lognormal_moments(*self.params)

    @property
    def mean(self) -> float:
        return self.moments()[0]

    def to_dict(self) -> dict:
        if self.kind == "beta":
            return {"kind": "beta", "a": self.params[0], "b": self.params[1]}
        return {"kind": "lognormal", "mu": self.params[0], "sigma": self.params[1]}

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalSpec":
        kind = d.get("kind")
        if kind == "beta":
            return cls.beta(d["a"], d["b"])
        if kind == "lognormal":
            if "mu" in d:
                return cls.lognormal(d["mu"], d["sigma"])
            return cls.lognormal_matching(d["mean"], d["variance"])
        raise ValidationError(f"unknown marginal kind {kind!r}")


def _beta_inverse_cdf(a: float, b: float, u: np.ndarray) -> np.ndarray:
    """Quantiles of beta(a, b) by a safeguarded bisection/Newton hybrid.

    Solves I_x(a, b) = u on the regularized incomplete beta function to an
    absolute tolerance of 1e-12 in x.  Vectorised over u.
    """
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    x = np.full_like(u, a / (a + b))
    log_norm = betaln(a, b)
    for _ in range(_ROOT_FIND_MAX_ITER):
        f = betainc(a, b, x) - u
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pdf = np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - log_norm)
            newton = x - f / pdf
        fallback = 0.5 * (lo + hi)
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x_next = np.where(ok, newton, fallback)
        if np.max(np.abs(x_next - x)) < _ROOT_FIND_TOL:
            return x_next
        x = x_next
    raise NumericalError(
        f"beta quantile root-find did not reach {_ROOT_FIND_TOL:g} "
        f"within {_ROOT_FIND_MAX_ITER} iterations"
    )


def inverse_cdf(marginal: MarginalSpec, u) -> np.ndarray | float:
    """Quantile function F^{-1}(u) of a marginal, u in the open unit interval."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
        raise DomainError("quantile argument must lie strictly inside (0, 1)")
    if marginal.kind == "beta":
        out = _beta_inverse_cdf(marginal.params[0], marginal.params[1], u_arr)
    else:
        mu, sigma = marginal.params
        out = np.exp(mu + sigma * ndtri(u_arr))
    if np.isscalar(u) or u_arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ScenarioSet:
    """N sampled joint terminal values, one row per scenario, atom weight 1/N."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        if arr.ndim != 2:
            raise ValidationError(f"scenario matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValidationError("scenario matrix needs at least one row")
        if np.any(arr < 0.0):
            i, j = np.argwhere(arr < 0.0)[0]
            raise ValidationError(f"negative sample at scenario {i}, asset {j + 1}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def to_csv(self, path) -> None:
        """Write `scenario,asset_1..asset_d` rows with 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario"] + [f"asset_{k + 1}" for k in range(self.d)])
            for i, row in enumerate(self.samples):
                writer.writerow([i] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "ScenarioSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "scenario":
                raise ValidationError(f"{path}: expected a 'scenario' header column")
            rows = [[float(v) for v in row[1:]] for row in reader if row]
        return cls(np.array(rows, dtype=float))


@dataclass(frozen=True)
class MarketModel:
    """Initial prices plus terminal scenarios for positions and eligible assets."""

    x0: np.ndarray
    xt: ScenarioSet
    s0: np.ndarray
    st: ScenarioSet
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        s0 = np.asarray(self.s0, dtype=float)
        if np.any(x0 <= 0) or np.any(s0 <= 0):
            raise ValidationError("initial prices must be strictly positive")
        if self.xt.n != self.st.n:
            raise ValidationError(
                f"position and eligible scenario counts differ: {self.xt.n} vs {self.st.n}"
            )
        d = self.xt.d
        if not (self.st.d == d and x0.shape == (d,) and s0.shape == (d,)):
            raise ValidationError("inconsistent dimension across market fields")
        x0.flags.writeable = False
        s0.flags.writeable = False
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "s0", s0)

    @property
    def n(self) -> int:
        return self.xt.n

    @property
    def d(self) -> int:
        return self.xt.d

    def eligible_returns(self) -> np.ndarray:
        """Terminal value per unit of initial price, S_T / s_0, per scenario."""
        return self.st.samples / self.s0

    def all_eligible_wealth(self) -> np.ndarray:
        """Terminal wealth when every position is fully shifted to its eligible asset."""
        return (self.x0 / self.s0) * self.st.samples

    def permuted(self, order: Sequence[int]) -> "MarketModel":
        """Market with institutions relabelled by `order` (testing helper)."""
        idx = list(order)
        return MarketModel(
            x0=self.x0[idx],
            xt=ScenarioSet(self.xt.samples[:, idx]),
            s0=self.s0[idx],
            st=ScenarioSet(self.st.samples[:, idx]),
            meta=dict(self.meta, permuted=idx),
        )


def build_correlation(
    d: int,
    rho_xx: float = 0.0,
    rho_ss: float = 0.0,
    rho_x1s1: float = 0.0,
) -> np.ndarray:
    """Equicorrelation matrix over the stacked vector (X^1..X^d, S^1..S^d).

    rho_xx couples all position pairs, rho_ss all eligible-asset pairs, and
    rho_x1s1 couples institution 1's position with its own eligible asset.
    """
    corr = np.eye(2 * d)
    for i in range(d):
        for j in range(d):
            if i != j:
                corr[i, j] = rho_xx
                corr[d + i, d + j] = rho_ss
    corr[0, d] = corr[d, 0] = rho_x1s1
    return corr


def validate_correlation(corr: np.ndarray, d: int) -> np.ndarray:
    """Check shape/symmetry/range and return the Cholesky factor."""
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (2 * d, 2 * d):
        raise ValidationError(
            f"correlation matrix must be {2 * d}x{2 * d}, got {corr.shape}"
        )
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ValidationError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ValidationError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(corr) > 1.0 + 1e-12):
        raise ValidationError("correlation entries must lie in [-1, 1]")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"correlation matrix is not positive definite: {exc}") from exc


@dataclass(frozen=True)
class MarketConfig:
    """Everything needed to sample a MarketModel deterministically."""

    positions: tuple[MarginalSpec, ...]
    eligibles: tuple[MarginalSpec, ...]
    correlation: np.ndarray
    n_scenarios: int
    seed: int
    x_return: float = 0.15
    s_return: float = 0.10

    def __post_init__(self):
        if len(self.positions) != len(self.eligibles):
            raise ValidationError("positions and eligibles must have equal length")
        if len(self.positions) < 1:
            raise ValidationError("need at least one asset")
        if self.n_scenarios < 1:
            raise ValidationError("n_scenarios must be >= 1")
        corr = np.asarray(self.correlation, dtype=float)
        corr.flags.writeable = False
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "positions", tuple(self.positions))
        object.__setattr__(self, "eligibles", tuple(self.eligibles))

    @property
    def d(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        return {
            "positions": [m.to_dict() for m in self.positions],
            "eligibles": [m.to_dict() for m in self.eligibles],
            "correlation": np.asarray(self.correlation).tolist(),
            "n_scenarios": self.n_scenarios,
            "seed": self.seed,
            "x_return": self.x_return,
            "s_return": self.s_return,
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "MarketConfig":
        positions = [MarginalSpec.from_dict(m) for m in cfg["positions"]]
        eligibles = [MarginalSpec.from_dict(m) for m in cfg["eligibles"]]
        d = len(positions)
        if "correlation" in cfg:
            corr = np.asarray(cfg["correlation"], dtype=float)
        else:
            corr = build_correlation(
                d,
                rho_xx=cfg.get("rho_xx", 0.0),
                rho_ss=cfg.get("rho_ss", 0.0),
                rho_x1s1=cfg.get("rho_x1s1", 0.0),
            )
        return cls(
            positions=tuple(positions),
            eligibles=tuple(eligibles),
            correlation=corr,
            n_scenarios=int(cfg["n_scenarios"]),
            seed=int(cfg["seed"]),
            x_return=float(cfg.get("x_return", 0.15)),
            s_return=float(cfg.get("s_return", 0.10)),
        )

    @classmethod
    def from_json(cls, path) -> "MarketConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def sample_market(config: MarketConfig, seed: int | None = None) -> MarketModel:
    """Draw a MarketModel from the Gaussian copula model.

    N iid 2d-dimensional standard normals are correlated through the Cholesky
    factor of the configured matrix, mapped through the normal CDF to
    uniforms, and pushed through each marginal's quantile function.  Initial
    prices follow from the configured expected returns, so with the defaults
    x0 = E[X_T] / 1.15 and s0 = E[S_T] / 1.10.
    """
    d = config.d
    chol = validate_correlation(config.correlation, d)
    use_seed = config.seed if seed is None else int(seed)
    rng = np.random.Generator(np.random.Philox(use_seed))
    z = rng.standard_normal((config.n_scenarios, 2 * d))
    scores = z @ chol.T
    eps = np.finfo(float).eps
    u = np.clip(ndtr(scores), eps, 1.0 - eps)

    xt = np.empty((config.n_scenarios, d))
    st = np.empty((config.n_scenarios, d))
    for k in range(d):
        xt[:, k] = inverse_cdf(config.positions[k], u[:, k])
        st[:, k] = inverse_cdf(config.eligibles[k], u[:, d + k])

    x0 = np.array([m.mean for m in config.positions]) / (1.0 + config.x_return)
    s0 = np.array([m.mean for m in config.eligibles]) / (1.0 + config.s_return)
    meta = {
        "seed": use_seed,
        "n_scenarios": config.n_scenarios,
        "x_return": config.x_return,
        "s_return": config.s_return,
        "generator": "philox",
    }
    return MarketModel(x0=x0, xt=ScenarioSet(xt), s0=s0, st=ScenarioSet(st), meta=meta)
