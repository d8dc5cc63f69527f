"""Eisenberg-Noe clearing on a network with a society sink node.

The liability matrix is (d+1) x (d+1) with node 0 = society, which owes
nothing and collects from everyone.  Clearing payments solve the fixed point
p_i = min(Lhat_i, x_i + sum_j Pi_ji p_j); all institutions owe society a
positive amount, so the fixed-point map is a contraction and the clearing
vector is unique.  The aggregation function is society's clearing income
minus the promised fraction beta of its claims.

The scenario-batch path dispatches to a compiled kernel when the extension
built from ``_clearing_ext.pyx`` is importable, otherwise to the vectorised
numpy fallback.  Set SYSRISK_PURE_PY=1 to force the fallback.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NumericalError, ValidationError
from .scenarios import ScenarioSet

from . import _clearing_np

try:  # pragma: no cover - exercised implicitly by whichever env runs
    from . import _clearing_ext
except ImportError:  # pragma: no cover
    _clearing_ext = None

if _clearing_ext is not None and os.environ.get("SYSRISK_PURE_PY", "") not in ("1", "true"):
    _KERNEL = _clearing_ext
else:
    _KERNEL = _clearing_np

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000

__all__ = [
    "LiabilityStructure",
    "ClearingVector",
    "AggregationSpec",
    "validate_liabilities",
    "liabilities_from_csv",
    "liabilities_from_json",
    "symmetric_liabilities",
    "clearing_picard",
    "clearing_fictitious_default",
    "aggregate",
    "aggregate_scenarios",
    "clearing_backend",
    "write_aggregates_csv",
]


def clearing_backend() -> str:
    """Name of the active batch kernel: "compiled" or "python"."""
    return _KERNEL.BACKEND_NAME


@dataclass(frozen=True)
class LiabilityStructure:
    """Validated nominal liabilities with derived totals and relative shares."""

    matrix: np.ndarray  # (d+1, d+1), society is node 0
    totals: np.ndarray  # (d,) Lhat_i for institutions 1..d
    relative: np.ndarray  # (d, d+1) rows: institutions, columns: all nodes

    @property
    def d(self) -> int:
        return self.totals.shape[0]

    @property
    def inner(self) -> np.ndarray:
        """Institution-to-institution relative liabilities, (d, d)."""
        return self.relative[:, 1:]

    @property
    def to_society(self) -> np.ndarray:
        """Relative liability of each institution toward society, (d,)."""
        return self.relative[:, 0]

    @property
    def society_claims(self) -> float:
        """Total nominal liabilities owed to society, sum_i L_i0."""
        return float(self.matrix[1:, 0].sum())


def validate_liabilities(raw) -> LiabilityStructure:
    """Check all structural invariants and derive totals/relative liabilities.

    Raises ValidationError naming the first offending entry.
    """
    L = np.asarray(raw, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"liability matrix must be square, got shape {L.shape}")
    d = L.shape[0] - 1
    if d < 2:
        raise ValidationError(f"need at least 2 institutions plus society, got d={d}")
    neg = np.argwhere(L < 0)
    if neg.size:
        i, j = neg[0]
        raise ValidationError(f"negative liability L[{i},{j}]={L[i, j]}")
    diag = np.flatnonzero(np.diag(L) != 0)
    if diag.size:
        i = diag[0]
        raise ValidationError(f"self-liability L[{i},{i}]={L[i, i]} must be zero")
    row0 = np.flatnonzero(L[0] != 0)
    if row0.size:
        j = row0[0]
        raise ValidationError(f"society is a sink: L[0,{j}]={L[0, j]} must be zero")
    no_society = np.flatnonzero(L[1:, 0] <= 0)
    if no_society.size:
        i = no_society[0] + 1
        raise ValidationError(f"institution {i} owes society nothing: L[{i},0] must be > 0")
    totals = L[1:, :].sum(axis=1)
    relative = L[1:, :] / totals[:, None]
    L = np.ascontiguousarray(L)
    totals = np.ascontiguousarray(totals)
    relative = np.ascontiguousarray(relative)
    L.flags.writeable = False
    totals.flags.writeable = False
    relative.flags.writeable = False
    return LiabilityStructure(matrix=L, totals=totals, relative=relative)


def symmetric_liabilities(d: int, bilateral: float, society: float) -> LiabilityStructure:
    """All-to-all network: L_ij = bilateral for i != j >= 1, L_i0 = society."""
    L = np.zeros((d + 1, d + 1))
    L[1:, 0] = society
    for i in range(1, d + 1):
        for j in range(1, d + 1):
            if i != j:
                L[i, j] = bilateral
    return validate_liabilities(L)


def liabilities_from_csv(path) -> LiabilityStructure:
    """(d+1) x (d+1) row-major values, society first; plain CSV, no header."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return validate_liabilities(np.array(rows, dtype=float))


def liabilities_from_json(source) -> LiabilityStructure:
    """Inline JSON: either a nested list or {"matrix": [[...]]}."""
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = source
    if isinstance(data, dict):
        if "matrix" in data:
            data = data["matrix"]
        elif "bilateral" in data:
            liab = symmetric_liabilities(
                int(data["d"]), float(data["bilateral"]), float(data["society"])
            )
            return liab
        else:
            raise ValidationError("liability JSON needs 'matrix' or 'bilateral'/'society'/'d'")
    return validate_liabilities(np.array(data, dtype=float))


@dataclass(frozen=True)
class ClearingVector:
    """Fixed-point payments with their defect and defaulting institutions.

    Defaulting institutions are reported with network node ids (1..d);
    society is node 0 and never pays.
    """

    payments: np.ndarray
    residual: float
    defaulting: tuple[int, ...]


@dataclass(frozen=True)
class AggregationSpec:
    """Society-side aggregation: clearing income minus beta * promised claims."""

    liabilities: LiabilityStructure
    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must lie strictly inside (0, 1), got {self.beta}")

    @property
    def floor(self) -> float:
        return -self.beta * self.liabilities.society_claims

    @property
    def ceiling(self) -> float:
        return (1.0 - self.beta) * self.liabilities.society_claims


def _clearing_map(p, x, liab):
    return np.minimum(liab.totals, np.maximum(0.0, x + liab.inner.T @ p))


def _finish(p, x, liab) -> ClearingVector:
    residual = float(np.max(np.abs(p - _clearing_map(p, x, liab))))
    defaulting = tuple(int(i) + 1 for i in np.flatnonzero(p < liab.totals))
    p = np.ascontiguousarray(p)
    p.flags.writeable = False
    return ClearingVector(payments=p, residual=residual, defaulting=defaulting)


def _check_wealth(x, liab) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (liab.d,):
        raise ValidationError(f"wealth vector must have shape ({liab.d},), got {x.shape}")
    if np.any(x < 0):
        raise ValidationError("wealth must be nonnegative")
    return x


def clearing_picard(
    x, liab: LiabilityStructure, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> ClearingVector:
    """Clearing payments by monotone fixed-point iteration from full payment.

    The iterate sequence starting at p = Lhat is componentwise non-increasing
    and converges to the greatest clearing vector; iteration stops once the
    sup-norm step falls below tol.
    """
    x = _check_wealth(x, liab)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    p = liab.totals.copy()
    for _ in range(max_iter):
        nxt = _clearing_map(p, x, liab)
        step = float(np.max(np.abs(nxt - p)))
        p = nxt
        if step < tol:
            return _finish(p, x, liab)
    raise ConvergenceError(
        f"clearing iteration did not reach {tol:g} within {max_iter} steps",
        last_iterate=p,
    )


def clearing_fictitious_default(x, liab: LiabilityStructure) -> ClearingVector:
    """Clearing payments by the default-set iteration.

    Posits a defaulting set, solves the linear system for the defaulters'
    payments while everyone else pays in full, and enlarges the set whenever
    the updated payments reveal new defaults.  Terminates in at most d rounds.
    """
    x = _check_wealth(x, liab)
    d = liab.d
    inner = liab.inner
    totals = liab.totals
    p = totals.copy()
    defaulting = np.zeros(d, dtype=bool)
    for _ in range(d + 1):
        resources = x + inner.T @ p
        new_defaulting = defaulting | (resources < totals)
        if new_defaulting.sum() == defaulting.sum():
            return _finish(p, x, liab)
        defaulting = new_defaulting
        idx = np.flatnonzero(defaulting)
        keep = np.flatnonzero(~defaulting)
        # p_D = x_D + Pi[D,D]^T p_D + Pi[ND,D]^T Lhat_ND
        A = np.eye(idx.size) - inner[np.ix_(idx, idx)].T
        rhs = x[idx]
        if keep.size:
            rhs = rhs + inner[np.ix_(keep, idx)].T @ totals[keep]
        try:
            p_def = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular default system for defaulting set {tuple(int(i) + 1 for i in idx)}"
            ) from exc
        p = totals.copy()
        p[idx] = np.maximum(0.0, p_def)
    raise NumericalError("default-set iteration failed to stabilise within d rounds")


def clear_scenarios(
    wealth,
    liab: LiabilityStructure,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend: str | None = None,
) -> np.ndarray:
    """Clearing payments for every scenario row of a wealth matrix.

    `backend` overrides the import-time kernel choice ("compiled"/"python"),
    mainly for the benchmark and backend-agreement tests.  Effective wealth
    below zero (possible for capital-extraction scenarios) is handled by the
    limited-liability form of the map, min(Lhat, max(0, x + Pi^T p)), which
    agrees with the standard map on nonnegative wealth.
    """
    wealth = np.asarray(wealth, dtype=float)
    if wealth.ndim != 2 or wealth.shape[1] != liab.d:
        raise ValidationError(
            f"wealth matrix must have shape (N, {liab.d}), got {wealth.shape}"
        )
    if backend is None:
        kernel = _KERNEL
    elif backend == "compiled":
        if _clearing_ext is None:
            raise ValidationError("compiled kernel requested but the extension is missing")
        kernel = _clearing_ext
    elif backend == "python":
        kernel = _clearing_np
    else:
        raise ValidationError(f"unknown backend {backend!r}")
    p, _, converged = kernel.clear_scenarios_kernel(
        wealth, liab.totals, liab.inner, tol, max_iter
    )
    if not converged:
        raise ConvergenceError(
            f"batch clearing did not reach {tol:g} within {max_iter} steps",
            last_iterate=p,
        )
    return p


def aggregate(
    x,
    spec: AggregationSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Society's net outcome for one wealth vector."""
    cv = clearing_picard(x, spec.liabilities, tol=tol, max_iter=max_iter)
    liab = spec.liabilities
    return float(cv.payments @ liab.to_society - spec.beta * liab.society_claims)


def aggregate_scenarios(
    xt,
    spec: AggregationSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend: str | None = None,
) -> np.ndarray:
    """Society's net outcome for every scenario row, order preserved."""
    wealth = xt.samples if isinstance(xt, ScenarioSet) else np.asarray(xt, dtype=float)
    liab = spec.liabilities
    p = clear_scenarios(wealth, liab, tol=tol, max_iter=max_iter, backend=backend)
    return p @ liab.to_society - spec.beta * liab.society_claims


def write_aggregates_csv(path, values) -> None:
    """`scenario,lambda_value` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "lambda_value"])
        for i, v in enumerate(np.asarray(values, dtype=float)):
            writer.writerow([i, f"{v:.17g}"])
