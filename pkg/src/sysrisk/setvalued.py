"""Set-valued intrinsic and monetary systemic risk measures.

A fraction vector lam in [0,1]^d is an intrinsic member when the aggregated
system after selling the fractions lam into the eligible assets is
acceptable; a capital vector k is a monetary member when the aggregated
system after injecting k through the eligible assets is acceptable.  Both
sets are approximated from certified member points:

* boundary search: bisection along rays from face grid points toward the
  all-eligible corner (intrinsic) or the top box corner (monetary), each
  emitted point carrying an unacceptable inner and acceptable outer bracket;
* minimal points: bisection over hyperplanes of constant (weighted) 1-norm,
  optionally pruned using convexity of the member set.

All membership tests inside one search reuse a single frozen scenario set,
so the empirical acceptance surface is deterministic and bisection along a
ray is well defined.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .clearing import DEFAULT_MAX_ITER, DEFAULT_TOL, AggregationSpec, aggregate_scenarios
from .errors import DomainError, InfeasibleError, ResolutionError, ValidationError
from .risk import AcceptanceCriterion
from .scenarios import MarketModel, ScenarioSet

__all__ = [
    "BoundaryPoint",
    "BoundaryApproximation",
    "MinimalPointResult",
    "intrinsic_system",
    "monetary_wealth",
    "is_member_intrinsic",
    "is_member_monetary",
    "boundary_intrinsic",
    "boundary_monetary",
    "minimal_points",
    "convex_prune",
    "full_grid_scan",
    "default_monetary_box",
    "hyperplane_basis",
]


def _check_fractions(lam, d: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (d,):
        raise DomainError(f"fraction vector must have shape ({d},), got {lam.shape}")
    if np.any(lam < -1e-12) or np.any(lam > 1.0 + 1e-12):
        raise DomainError("fractions must lie in [0, 1]")
    return np.clip(lam, 0.0, 1.0)


def intrinsic_system(market: MarketModel, lam) -> ScenarioSet:
    """Terminal wealth after selling fractions lam into the eligible assets.

    Componentwise convex combination (1-lam) * X_T + lam * x0 * S_T / s0.
    """
    lam = _check_fractions(lam, market.d)
    w = (1.0 - lam) * market.xt.samples + lam * (market.x0 / market.s0) * market.st.samples
    return ScenarioSet(w)


def monetary_wealth(market: MarketModel, k) -> np.ndarray:
    """Terminal wealth after injecting capital k through the eligible assets.

    X_T + k * S_T / s0.  Entries may be negative when k extracts capital;
    clearing then uses its limited-liability form.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (market.d,):
        raise DomainError(f"capital vector must have shape ({market.d},), got {k.shape}")
    if not np.all(np.isfinite(k)):
        raise DomainError("capital vector must be finite")
    return market.xt.samples + k * (market.st.samples / market.s0)


def is_member_intrinsic(
    lam,
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> bool:
    """Membership test of the intrinsic risk set."""
    lam = _check_fractions(lam, market.d)
    w = (1.0 - lam) * market.xt.samples + lam * (market.x0 / market.s0) * market.st.samples
    values = aggregate_scenarios(w, agg, tol=clear_tol, max_iter=clear_max_iter)
    return criterion.value(values) <= 0.0


def is_member_monetary(
    k,
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> bool:
    """Membership test of the monetary risk set."""
    w = monetary_wealth(market, k)
    values = aggregate_scenarios(w, agg, tol=clear_tol, max_iter=clear_max_iter)
    return criterion.value(values) <= 0.0


@dataclass(frozen=True)
class BoundaryPoint:
    """One certified member produced by the ray bisection.

    Direct members of the face grid carry n_iter = 0 and a degenerate
    bracket; bisected points satisfy `inner` not member, `outer` member and
    bracket width exactly 2^-n times the ray length.
    """

    origin_index: int
    origin: np.ndarray
    point: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    n_iter: int
    t_lo: float
    t_hi: float
    ray_norm: float
    direct: bool

    @property
    def width(self) -> float:
        return (self.t_hi - self.t_lo) * self.ray_norm


@dataclass(frozen=True)
class BoundaryApproximation:
    """Certified member points near the boundary of a risk set."""

    kind: str  # "intrinsic" or "monetary"
    points: tuple[BoundaryPoint, ...]
    grid_step: float
    epsilon: float
    feasible: bool
    target: np.ndarray
    box: tuple[float, float] | None = None
    membership_tests: int = 0

    @property
    def d(self) -> int:
        return self.target.shape[0]

    def member_points(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, self.d))
        return np.array([p.point for p in self.points])

    def min_norm1(self) -> float:
        """Smallest coordinate sum over the certified points."""
        pts = self.member_points()
        if pts.size == 0:
            return math.inf
        return float(pts.sum(axis=1).min())

    def to_csv(self, path, meta: dict | None = None) -> None:
        header = {
            "kind": self.kind,
            "grid_step": self.grid_step,
            "epsilon": self.epsilon,
            "feasible_flag": self.feasible,
            "n_points": len(self.points),
        }
        if self.box is not None:
            header["box"] = list(self.box)
        if meta:
            header.update(meta)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["origin_index"]
                + [f"lambda_{k + 1}" for k in range(self.d)]
                + ["bracket_width", "n_iter"]
            )
            for p in self.points:
                writer.writerow(
                    [p.origin_index]
                    + [f"{v:.17g}" for v in p.point]
                    + [f"{p.width:.17g}", p.n_iter]
                )


def _axis_values(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive lattice {lo, lo+step, ...} capped by and ending exactly at hi."""
    span = hi - lo
    m = int(math.ceil(span / step - 1e-9))
    vals = [lo + i * step for i in range(m)]
    vals.append(hi)
    return vals


def _low_face_grid(lows: np.ndarray, highs: np.ndarray, step: float) -> list[np.ndarray]:
    """Deduplicated grid points on the d faces through the low corner."""
    d = lows.shape[0]
    seen = set()
    points = []
    for axis in range(d):
        other = [a for a in range(d) if a != axis]
        axis_vals = [_axis_values(lows[a], highs[a], step) for a in other]
        for combo in itertools.product(*axis_vals):
            pt = np.empty(d)
            pt[axis] = lows[axis]
            for a, v in zip(other, combo):
                pt[a] = v
            key = tuple(round(v, 12) for v in pt)
            if key in seen:
                continue
            seen.add(key)
            points.append(pt)
    return points


def _trace_boundary(kind, member, origins, target, lows, highs, grid_step, epsilon, box):
    """Shared ray-bisection driver for both boundary searches."""
    tests = 0
    points = []
    for idx, origin in enumerate(origins):
        direction = target - origin
        ray_norm = float(np.linalg.norm(direction))

        def at(t: float) -> np.ndarray:
            return np.clip(origin + t * direction, lows, highs)

        tests += 1
        if member(origin):
            points.append(
                BoundaryPoint(
                    origin_index=idx,
                    origin=origin,
                    point=origin,
                    inner=origin,
                    outer=origin,
                    n_iter=0,
                    t_lo=0.0,
                    t_hi=0.0,
                    ray_norm=ray_norm,
                    direct=True,
                )
            )
            continue
        t_lo, t_hi, n = 0.0, 1.0, 0
        while (t_hi - t_lo) * ray_norm >= epsilon:
            t_mid = 0.5 * (t_lo + t_hi)
            tests += 1
            if member(at(t_mid)):
                t_hi = t_mid
            else:
                t_lo = t_mid
            n += 1
        points.append(
            BoundaryPoint(
                origin_index=idx,
                origin=origin,
                point=at(t_hi),
                inner=at(t_lo),
                outer=at(t_hi),
                n_iter=n,
                t_lo=t_lo,
                t_hi=t_hi,
                ray_norm=ray_norm,
                direct=False,
            )
        )
    return BoundaryApproximation(
        kind=kind,
        points=tuple(points),
        grid_step=grid_step,
        epsilon=epsilon,
        feasible=True,
        target=target,
        box=box,
        membership_tests=tests,
    )


def boundary_intrinsic(
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    grid_step: float = 0.05,
    epsilon: float = 1e-6,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> BoundaryApproximation:
    """Boundary approximation of the intrinsic risk set.

    Grid points on the faces of [0,1]^d through 0 are tested; non-members
    are bisected along the segment toward the all-ones vector, which must be
    a member (otherwise the search direction carries no certificate and the
    caller should fall back to full_grid_scan).
    """
    if not 0.0 < grid_step <= 1.0:
        raise DomainError(f"grid_step must lie in (0, 1], got {grid_step}")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    d = market.d

    def member(lam) -> bool:
        return is_member_intrinsic(
            lam, market, agg, criterion, clear_tol=clear_tol, clear_max_iter=clear_max_iter
        )

    target = np.ones(d)
    if not member(target):
        raise InfeasibleError(
            "the all-eligible system is not acceptable; the face bisection has no "
            "feasible anchor - use full_grid_scan instead"
        )
    lows = np.zeros(d)
    highs = np.ones(d)
    origins = _low_face_grid(lows, highs, grid_step)
    return _trace_boundary(
        "intrinsic", member, origins, target, lows, highs, grid_step, epsilon, None
    )


def default_monetary_box(market: MarketModel) -> tuple[float, float]:
    """Symmetric default search box for capital injections."""
    top = 2.0 * float(np.max(market.x0))
    return (-top, top)


def boundary_monetary(
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    grid_step: float = 0.05,
    epsilon: float = 1e-6,
    box: tuple[float, float] | None = None,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> BoundaryApproximation:
    """Boundary approximation of the monetary risk set over a search box.

    Rays run from grid points on the low faces of [k_lo, k_hi]^d toward the
    top corner k_hi * 1, which must be a member (box error otherwise).
    grid_step is absolute in capital units.
    """
    if epsilon <= 0 or grid_step <= 0:
        raise DomainError("grid_step and epsilon must be positive")
    if box is None:
        box = default_monetary_box(market)
    k_lo, k_hi = float(box[0]), float(box[1])
    if not k_lo < k_hi:
        raise DomainError(f"box must satisfy k_lo < k_hi, got {box}")
    d = market.d

    def member(k) -> bool:
        return is_member_monetary(
            k, market, agg, criterion, clear_tol=clear_tol, clear_max_iter=clear_max_iter
        )

    target = np.full(d, k_hi)
    if not member(target):
        raise InfeasibleError(
            f"box error: the top corner {k_hi} * 1 is not a member; enlarge the box"
        )
    lows = np.full(d, k_lo)
    highs = np.full(d, k_hi)
    origins = _low_face_grid(lows, highs, grid_step)
    return _trace_boundary(
        "monetary", member, origins, target, lows, highs, grid_step, epsilon, (k_lo, k_hi)
    )


def hyperplane_basis(d: int) -> np.ndarray:
    """Orthonormal basis of the complement of the all-ones direction.

    Gram-Schmidt applied to e_1 - e_2, e_1 - e_3, ..., e_1 - e_d in fixed
    index order; returns a (d, d-1) matrix with orthonormal columns.
    """
    if d < 2:
        raise DomainError("need d >= 2")
    basis = np.empty((d, d - 1))
    for j in range(d - 1):
        v = np.zeros(d)
        v[0] = 1.0
        v[j + 1] = -1.0
        for i in range(j):
            v -= (basis[:, i] @ v) * basis[:, i]
        basis[:, j] = v / np.linalg.norm(v)
    return basis


def convex_prune(
    current_plane_members,
    candidate_plane_members,
    epsilon_shift: float,
    grid_step: float,
):
    """Restrict lower-plane searches using convexity of the member set.

    current_plane_members are member points on the plane of offset k,
    candidate_plane_members those on offset k - epsilon_shift.  When every
    candidate lies (up to half a grid step in sup-norm) inside the current
    members translated by -(epsilon_shift / d) * 1, searches at smaller
    offsets may be restricted to translates of the candidates; the function
    then returns the candidates.  Returns None when the containment premise
    fails and pruning must stay off.
    """
    cand = np.asarray(candidate_plane_members, dtype=float)
    if cand.size == 0:
        return cand.reshape(0, cand.shape[1] if cand.ndim == 2 else 0)
    cand = np.atleast_2d(cand)
    cur = np.atleast_2d(np.asarray(current_plane_members, dtype=float))
    if cur.size == 0:
        return None
    d = cand.shape[1]
    shifted = cur - epsilon_shift / d
    tol = 0.5 * grid_step + 1e-12
    for c in cand:
        if np.min(np.max(np.abs(shifted - c), axis=1)) > tol:
            return None
    return cand


@dataclass(frozen=True)
class MinimalPointResult:
    """Planes search output: smallest certified (weighted) coordinate sum."""

    k_min: float
    minimal_points: np.ndarray  # (M, d) member grid points on the certified plane
    bracket: tuple[float, float]
    plane_grid_step: float
    delta: float
    weights: np.ndarray | None = None
    membership_tests: int = 0
    prune_used: bool = False

    def to_csv(self, path, meta: dict | None = None) -> None:
        header = {
            "k_min": self.k_min,
            "bracket": list(self.bracket),
            "plane_grid_step": self.plane_grid_step,
            "delta": self.delta,
            "weights": None if self.weights is None else list(self.weights),
            "prune_used": self.prune_used,
        }
        if meta:
            header.update(meta)
        d = self.minimal_points.shape[1] if self.minimal_points.size else 0
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["point_index"] + [f"lambda_{k + 1}" for k in range(d)] + ["norm1"]
            )
            for i, p in enumerate(self.minimal_points):
                writer.writerow(
                    [i] + [f"{v:.17g}" for v in p] + [f"{float(p.sum()):.17g}"]
                )


def _plane_lattice(weights: np.ndarray, step: float):
    """Lattice coordinates on the hyperplane complement covering the box.

    Returns (basis, coordinate offsets of the box centre, coordinate grids).
    The lattice always contains the projection of the box centre, so for
    unit weights the diagonal point itself is a lattice point on each plane.
    """
    d = weights.shape[0]
    basis = hyperplane_basis(d)
    centre = weights / 2.0
    offsets = basis.T @ centre
    grids = []
    for j in range(d - 1):
        extent = float(np.abs(basis[:, j]) @ weights) / 2.0
        m = int(math.ceil(extent / step - 1e-12))
        grids.append(offsets[j] + step * np.arange(-m, m + 1))
    return basis, grids


def _plane_points(basis, grids, coords_list, k, weights):
    """Cube-clipped lattice points on the plane of weighted 1-norm k.

    coords_list holds integer index tuples into `grids`; returns the pairs
    (index tuple, fraction vector) that fall inside the unit cube.
    """
    d = basis.shape[0]
    anchor = (k / d) * np.ones(d)
    out = []
    for coords in coords_list:
        t = np.array([grids[j][c] for j, c in enumerate(coords)])
        mu = anchor + basis @ t
        lam = mu / weights
        if np.all(lam >= -1e-9) and np.all(lam <= 1.0 + 1e-9):
            out.append((coords, np.clip(lam, 0.0, 1.0)))
    return out


def minimal_points(
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    plane_grid_step: float = 0.05,
    delta: float = 1e-4,
    weights=None,
    prune: bool = True,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> MinimalPointResult:
    """Member fraction vectors with minimal (weighted) coordinate sum.

    Bisection over the offset k of the planes {lam : w . lam = k}: at each
    trial offset the lattice points of the plane inside [0,1]^d are tested
    for membership, and the bracket tightens onto the smallest offset whose
    plane carries certified members.  With prune=True the convexity-based
    restriction narrows the lattice once the containment premise holds.
    With weights, the search runs over the rescaled set w * R by testing
    lam = mu / w, which realises the weighted-sum minimisation.
    """
    if delta <= 0 or plane_grid_step <= 0:
        raise DomainError("plane_grid_step and delta must be positive")
    d = market.d
    if weights is None:
        w = np.ones(d)
        weights_out = None
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (d,):
            raise DomainError(f"weights must have shape ({d},), got {w.shape}")
        if np.any(w <= 0):
            raise DomainError(
                "weights must be strictly positive (a zero weight makes the "
                "rescaled search degenerate)"
            )
        weights_out = w

    tests = 0

    def member(lam) -> bool:
        nonlocal tests
        tests += 1
        return is_member_intrinsic(
            lam, market, agg, criterion, clear_tol=clear_tol, clear_max_iter=clear_max_iter
        )

    if member(np.zeros(d)):
        return MinimalPointResult(
            k_min=0.0,
            minimal_points=np.zeros((1, d)),
            bracket=(0.0, 0.0),
            plane_grid_step=plane_grid_step,
            delta=delta,
            weights=weights_out,
            membership_tests=tests,
        )
    if not member(np.ones(d)):
        raise InfeasibleError(
            "the all-eligible system is not acceptable; the plane bisection has "
            "no feasible end - use full_grid_scan instead"
        )

    basis, grids = _plane_lattice(w, plane_grid_step)
    full_coords = list(itertools.product(*[range(len(g)) for g in grids]))
    k_top = float(w.sum())

    def plane_members(k, coords_list):
        members = []
        for coords, lam in _plane_points(basis, grids, coords_list, k, w):
            if member(lam):
                members.append((coords, lam))
        return members

    # The top plane is feasible through the all-ones member itself; lattice
    # members materialise once the bisection certifies a lower plane.
    k_a, k_b = 0.0, k_top
    best = None
    coords_pool = full_coords
    prune_used = False
    while k_b - k_a > delta:
        k_mid = 0.5 * (k_a + k_b)
        found = plane_members(k_mid, coords_pool)
        if found:
            if prune and best is not None:
                kept = convex_prune(
                    np.array([lam for _, lam in best]),
                    np.array([lam for _, lam in found]),
                    epsilon_shift=k_b - k_mid,
                    grid_step=plane_grid_step,
                )
                if kept is not None:
                    coords_pool = [coords for coords, _ in found]
                    prune_used = True
            k_b = k_mid
            best = found
        else:
            k_a = k_mid
    if best is None:
        best = plane_members(k_top, full_coords)
        if not best:
            raise ResolutionError(
                "no certified plane carries a member lattice point; refine "
                "plane_grid_step"
            )
    return MinimalPointResult(
        k_min=k_b,
        minimal_points=np.array([lam for _, lam in best]),
        bracket=(k_a, k_b),
        plane_grid_step=plane_grid_step,
        delta=delta,
        weights=weights_out,
        membership_tests=tests,
        prune_used=prune_used,
    )


def full_grid_scan(
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    grid_step: float = 0.05,
    clear_tol: float = DEFAULT_TOL,
    clear_max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Exhaustive membership test over the full lattice on [0,1]^d.

    The fallback when the all-eligible system is unacceptable; the member
    set may then be empty, which is a legitimate (empty) measurement.
    """
    if not 0.0 < grid_step <= 1.0:
        raise DomainError(f"grid_step must lie in (0, 1], got {grid_step}")
    d = market.d
    vals = _axis_values(0.0, 1.0, grid_step)
    members = []
    for combo in itertools.product(vals, repeat=d):
        lam = np.array(combo)
        if is_member_intrinsic(
            lam, market, agg, criterion, clear_tol=clear_tol, clear_max_iter=clear_max_iter
        ):
            members.append(lam)
    if not members:
        return np.empty((0, d))
    return np.array(members)
