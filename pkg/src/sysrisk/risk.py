"""Empirical scalar risk machinery: VaR/ES, acceptance tests, scalar risk
measures with a general eligible asset, and the finite-sample ES dual check.

Conventions on a sample of size N with ascending order statistics
x_(1) <= ... <= x_(N):

* VaR_alpha = -x_(floor(alpha N) + 1), the exact infimum of
  {m : #(x_i + m < 0)/N <= alpha} over the empirical atoms.
* ES_alpha averages the worst floor(alpha N) losses plus the fractional
  remainder of the next one (tail-average estimator), so ES is continuous
  in alpha and dominates VaR.
* Acceptability means risk value <= 0; ties count as acceptable since the
  acceptance sets are closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "AcceptanceCriterion",
    "ScalarPosition",
    "DualCertificate",
    "empirical_var",
    "empirical_es",
    "is_acceptable",
    "scalar_monetary_rho",
    "scalar_intrinsic_rho",
    "es_dual_max",
    "random_certificate",
]


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    return x


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return float(alpha)


def empirical_var(samples, alpha: float) -> float:
    """Empirical Value-at-Risk at level alpha."""
    x = _as_samples(samples)
    alpha = _check_alpha(alpha)
    k = int(math.floor(alpha * x.size))
    return float(-np.partition(x, k)[k]) + 0.0  # normalise -0.0


def empirical_es(samples, alpha: float) -> float:
    """Empirical Expected Shortfall (tail-average estimator) at level alpha."""
    x = _as_samples(samples)
    alpha = _check_alpha(alpha)
    n = x.size
    k = int(math.floor(alpha * n))
    part = np.partition(x, k)
    tail_sum = float(-part[:k].sum())
    frac = alpha * n - k
    return (tail_sum + frac * float(-part[k])) / (alpha * n) + 0.0


@dataclass(frozen=True)
class AcceptanceCriterion:
    """VaR or ES at level alpha with acceptability threshold 0."""

    kind: str
    alpha: float

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("var", "es"):
            raise ValidationError(f"criterion kind must be 'var' or 'es', got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        _check_alpha(self.alpha)

    def value(self, samples) -> float:
        if self.kind == "var":
            return empirical_var(samples, self.alpha)
        return empirical_es(samples, self.alpha)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha}


def is_acceptable(samples, criterion: AcceptanceCriterion) -> bool:
    """True iff the empirical risk functional does not exceed 0."""
    return criterion.value(samples) <= 0.0


@dataclass(frozen=True)
class ScalarPosition:
    """One asset: strictly positive initial price plus terminal-value samples."""

    x0: float
    samples: np.ndarray

    def __post_init__(self):
        if self.x0 <= 0:
            raise DomainError(f"initial price must be positive, got {self.x0}")
        arr = np.asarray(self.samples, dtype=float).ravel()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)


_BRACKET_DOUBLINGS = 64


def scalar_monetary_rho(
    X: ScalarPosition,
    S: ScalarPosition,
    criterion: AcceptanceCriterion,
    tol: float = 1e-9,
) -> float:
    """Smallest capital m such that X_T + (m / s0) S_T is acceptable.

    Since S_T >= 0, acceptability is monotone in m; the infimum is located
    by doubling brackets and bisection to width tol.  Returns +inf when no
    tried capital makes the position acceptable (S_T vanishing on the
    relevant tail) and -inf when even extreme extraction stays acceptable.
    """
    s = np.asarray(S.samples, dtype=float)
    if np.any(s < 0):
        raise DomainError("eligible payoff must be nonnegative")
    if not np.any(s > 0):
        raise DomainError("eligible payoff must not be identically zero")
    ret = s / S.x0
    x = np.asarray(X.samples, dtype=float)

    def acceptable(m: float) -> bool:
        return criterion.value(x + m * ret) <= 0.0

    scale = max(1.0, abs(float(criterion.value(x)))) * max(1.0, float(S.x0))
    if acceptable(0.0):
        hi = 0.0
        lo = -scale
        for _ in range(_BRACKET_DOUBLINGS):
            if not acceptable(lo):
                break
            hi = lo
            lo *= 2.0
        else:
            return -math.inf
    else:
        lo = 0.0
        hi = scale
        for _ in range(_BRACKET_DOUBLINGS):
            if acceptable(hi):
                break
            lo = hi
            hi *= 2.0
        else:
            return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if acceptable(mid):
            hi = mid
        else:
            lo = mid
    return hi


def scalar_intrinsic_rho(
    X: ScalarPosition,
    S: ScalarPosition,
    criterion: AcceptanceCriterion,
    tol: float = 1e-9,
    verify_monotone: bool = False,
) -> float | None:
    """Smallest fraction lambda in [0, 1] whose sale makes X acceptable.

    The position (1-lambda) X_T + lambda (x0/s0) S_T is tested along the
    segment; bisection assumes acceptability is monotone in lambda.  With
    verify_monotone=True a 1e-3-resolution scan detects non-monotone
    acceptability and falls back to refining the leftmost acceptable point.
    Returns None when even lambda = 1 is unacceptable.
    """
    ratio = X.x0 / S.x0
    x = np.asarray(X.samples, dtype=float)
    s = np.asarray(S.samples, dtype=float)

    def acceptable(lam: float) -> bool:
        return criterion.value((1.0 - lam) * x + lam * ratio * s) <= 0.0

    if acceptable(0.0):
        return 0.0
    if not acceptable(1.0):
        return None

    lo, hi = 0.0, 1.0
    if verify_monotone:
        grid = np.linspace(0.0, 1.0, 1001)
        flags = np.array([acceptable(g) for g in grid])
        first = int(np.argmax(flags))
        if not flags[first:].all():
            # non-monotone acceptability: refine the leftmost acceptable point
            lo, hi = grid[first - 1], grid[first]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if acceptable(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class DualCertificate:
    """Atom probabilities of a reweighted scenario measure, capped for ES.

    Feasible certificates satisfy q >= 0, sum(q) = 1 and q_i <= 1/(alpha N),
    i.e. densities with respect to the empirical measure bounded by 1/alpha.
    """

    q: np.ndarray
    alpha: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        cap = 1.0 / (self.alpha * q.size)
        if np.any(q < -1e-12):
            raise ValidationError("certificate probabilities must be nonnegative")
        if abs(float(q.sum()) - 1.0) > 1e-9:
            raise ValidationError("certificate probabilities must sum to one")
        if np.any(q > cap * (1.0 + 1e-9)):
            raise ValidationError("certificate exceeds the 1/(alpha N) density cap")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    def value(self, samples) -> float:
        """Expected loss E_q[-X] under the reweighted measure."""
        return float(self.q @ (-np.asarray(samples, dtype=float).ravel()))


def random_certificate(rng: np.random.Generator, n: int, alpha: float) -> DualCertificate:
    """Random feasible certificate: normalised exponentials with one capped
    redistribution pass (total headroom n/(alpha n) - 1 > 0 guarantees a
    single pass restores feasibility)."""
    cap = 1.0 / (alpha * n)
    q = rng.exponential(size=n)
    q /= q.sum()
    over = q > cap
    if over.any():
        excess = float((q[over] - cap).sum())
        slack = np.where(over, 0.0, cap - q)
        q = np.where(over, cap, q + excess * slack / slack.sum())
    return DualCertificate(q=q, alpha=alpha)


def es_dual_max(
    samples, alpha: float, trials: int, seed: int
) -> tuple[float, float]:
    """Dual check for the ES estimator over density-capped certificates.

    Returns (best value over `trials` random feasible certificates, exact
    maximum).  The exact maximum places the full cap 1/(alpha N) on the
    worst floor(alpha N) scenarios and the remaining mass on the next one,
    which is the vertex solution of the capped-density linear program and
    coincides with the tail-average ES estimator.
    """
    x = _as_samples(samples)
    alpha = _check_alpha(alpha)
    n = x.size
    if alpha * n < 1.0:
        raise DomainError(f"need alpha * N >= 1, got alpha={alpha}, N={n}")
    k = int(math.floor(alpha * n))  # k <= n - 1 since alpha < 1
    cap = 1.0 / (alpha * n)
    part = np.partition(x, k)
    exact = cap * float(-part[:k].sum()) + (1.0 - k * cap) * float(-part[k])
    rng = np.random.Generator(np.random.Philox(seed))
    best = -math.inf
    for _ in range(trials):
        cert = random_certificate(rng, n, alpha)
        best = max(best, cert.value(x))
    return best, exact
