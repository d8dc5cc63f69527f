"""Configuration-driven reproduction of the simulation case studies.

Each study sweeps one model ingredient of a symmetric d-institution network
(correlations, liabilities, marginal volatility) while everything else,
including the random seed, stays fixed, and writes plot-ready CSV artifacts
plus a manifest.  The histogram study compares the aggregate outcomes of the
original, intrinsic, monetary and all-eligible systems at the cheapest
symmetric (diagonal) member points.

The shipped default for the society repayment fraction is beta = 0.9; it is
a calibration choice of this artifact (the underlying studies do not state
one) and is the value at which the all-eligible system's acceptability
flips near an eligible-asset correlation of 0.24.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clearing import (
    AggregationSpec,
    aggregate_scenarios,
    clearing_backend,
    symmetric_liabilities,
    write_aggregates_csv,
)
from .errors import InfeasibleError, ValidationError
from .risk import AcceptanceCriterion, empirical_es
from .scenarios import (
    MarginalSpec,
    MarketConfig,
    MarketModel,
    beta_moments,
    build_correlation,
    sample_market,
)
from .setvalued import (
    boundary_intrinsic,
    boundary_monetary,
    default_monetary_box,
    full_grid_scan,
    intrinsic_system,
    is_member_intrinsic,
    is_member_monetary,
    minimal_points,
    monetary_wealth,
)

__all__ = [
    "StudyConfig",
    "HistogramSummary",
    "CostSpec",
    "DiagonalSolution",
    "base_market_config",
    "run_study",
    "diagonal_requirements",
    "histogram_report",
    "apply_costs",
    "load_study_config",
]

STUDY_KINDS = (
    "corr_X",
    "corr_X1S1",
    "corr_S",
    "liab_society",
    "liab_bilateral",
    "volatility",
    "histograms",
    "costs",
)

DEFAULT_SWEEPS = {
    "corr_X": [-0.3, 0.0, 0.3],
    "corr_X1S1": [-0.5, 0.0, 0.5],
    "corr_S": [0.0, 0.1, 0.2, 0.3, 0.4],
    "liab_society": [0.1, 0.15, 0.2],
    "liab_bilateral": [0.3, 0.6, 1.2, 2.4],
    "volatility": [2.0, 4.0, 8.0],
    "histograms": [4, 20],
    "costs": [4, 20],
}

# Liability layouts for the many-institution histogram studies, keyed by d.
HISTOGRAM_LIABILITIES = {4: (0.6, 0.23), 20: (0.2, 0.25)}


@dataclass(frozen=True)
class CostSpec:
    """Friction parameters: transaction costs in basis points, cost of debt."""

    transaction_cost_bps: float = 50.0
    cost_of_debt: float = 0.0264

    def __post_init__(self):
        if self.transaction_cost_bps < 0 or self.cost_of_debt < 0:
            raise ValidationError("cost parameters must be nonnegative")

    @property
    def transaction_rate(self) -> float:
        return self.transaction_cost_bps / 1e4


@dataclass(frozen=True)
class StudyConfig:
    """Resolved parameters of one study run."""

    kind: str
    sweep: tuple = ()
    d: int = 2
    n_scenarios: int = 20_000
    seed: int = 42
    grid_step: float = 0.05
    epsilon: float = 1e-6
    beta: float = 0.9
    alpha: float = 0.05
    criterion_kind: str = "es"
    bilateral_liability: float = 0.6
    society_liability: float = 0.2
    position_a: float = 2.0
    position_b: float = 5.0
    eligible_variance_ratio: float = 0.2
    x_return: float = 0.15
    s_return: float = 0.10
    monetary_box: tuple[float, float] | None = None
    with_minimal: bool = False
    plane_grid_step: float = 0.035
    delta: float = 1e-4
    diagonal_tol: float = 1e-4
    bin_width: float = 0.005
    costs: CostSpec = field(default_factory=CostSpec)
    threads: int = 1

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValidationError(f"unknown study kind {self.kind!r}; pick from {STUDY_KINDS}")
        if self.n_scenarios < 1:
            raise ValidationError("n_scenarios must be >= 1")
        sweep = tuple(self.sweep) if self.sweep else tuple(DEFAULT_SWEEPS[self.kind])
        object.__setattr__(self, "sweep", sweep)

    @property
    def criterion(self) -> AcceptanceCriterion:
        return AcceptanceCriterion(self.criterion_kind, self.alpha)

    def to_dict(self) -> dict:
        out = {
            k: getattr(self, k)
            for k in (
                "kind d n_scenarios seed grid_step epsilon beta alpha criterion_kind "
                "bilateral_liability society_liability position_a position_b "
                "eligible_variance_ratio x_return s_return with_minimal "
                "plane_grid_step delta diagonal_tol bin_width threads"
            ).split()
        }
        out["sweep"] = list(self.sweep)
        out["monetary_box"] = None if self.monetary_box is None else list(self.monetary_box)
        out["costs"] = {
            "transaction_cost_bps": self.costs.transaction_cost_bps,
            "cost_of_debt": self.costs.cost_of_debt,
        }
        return out


def load_study_config(source) -> StudyConfig:
    """Build a StudyConfig from a JSON file path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    costs = data.pop("costs", None)
    if costs is not None:
        data["costs"] = CostSpec(**costs)
    if "sweep" in data and data["sweep"] is not None:
        data["sweep"] = tuple(data["sweep"])
    if data.get("monetary_box") is not None:
        data["monetary_box"] = tuple(data["monetary_box"])
    return StudyConfig(**data)


def base_market_config(
    cfg: StudyConfig,
    d: int | None = None,
    rho_xx: float = 0.0,
    rho_ss: float = 0.0,
    rho_x1s1: float = 0.0,
    position_a_first: float | None = None,
) -> MarketConfig:
    """Symmetric market of the study family.

    Positions are beta(a, b); each eligible asset is lognormal with the same
    mean as its position and `eligible_variance_ratio` times its variance.
    `position_a_first` overrides agent 1's beta shape a (with b rescaled so
    the mean is unchanged) for the volatility study.
    """
    d = cfg.d if d is None else d
    positions = []
    eligibles = []
    for k in range(d):
        a, b = cfg.position_a, cfg.position_b
        if k == 0 and position_a_first is not None:
            # keep mean a/(a+b) fixed while rescaling the shape
            a = position_a_first
            b = a * cfg.position_b / cfg.position_a
        pos = MarginalSpec.beta(a, b)
        mean, var = beta_moments(a, b)
        positions.append(pos)
        eligibles.append(
            MarginalSpec.lognormal_matching(mean, cfg.eligible_variance_ratio * var)
        )
    corr = build_correlation(d, rho_xx=rho_xx, rho_ss=rho_ss, rho_x1s1=rho_x1s1)
    return MarketConfig(
        positions=tuple(positions),
        eligibles=tuple(eligibles),
        correlation=corr,
        n_scenarios=cfg.n_scenarios,
        seed=cfg.seed,
        x_return=cfg.x_return,
        s_return=cfg.s_return,
    )


def _study_ingredients(cfg: StudyConfig, value):
    """Market, aggregation spec and file tag for one sweep value."""
    kind = cfg.kind
    bilateral, society, d = cfg.bilateral_liability, cfg.society_liability, cfg.d
    market_cfg = None
    if kind == "corr_X":
        market_cfg = base_market_config(cfg, rho_xx=value)
        tag = f"rho_x={value:g}"
    elif kind == "corr_X1S1":
        market_cfg = base_market_config(cfg, rho_x1s1=value)
        tag = f"rho_x1s1={value:g}"
    elif kind == "corr_S":
        market_cfg = base_market_config(cfg, rho_ss=value)
        tag = f"rho_s={value:g}"
    elif kind == "liab_society":
        market_cfg = base_market_config(cfg)
        society = float(value)
        tag = f"society={value:g}"
    elif kind == "liab_bilateral":
        market_cfg = base_market_config(cfg)
        bilateral = float(value)
        tag = f"bilateral={value:g}"
    elif kind == "volatility":
        market_cfg = base_market_config(cfg, position_a_first=float(value))
        tag = f"a1={value:g}"
    elif kind in ("histograms", "costs"):
        d = int(value)
        bilateral, society = HISTOGRAM_LIABILITIES.get(d, (bilateral, society))
        market_cfg = base_market_config(cfg, d=d)
        tag = f"d={d}"
    else:  # pragma: no cover - guarded by StudyConfig
        raise ValidationError(f"unknown study kind {kind!r}")
    market = sample_market(market_cfg)
    agg = AggregationSpec(symmetric_liabilities(d, bilateral, society), cfg.beta)
    return market, agg, tag


@dataclass(frozen=True)
class DiagonalSolution:
    """Certified diagonal requirements: smallest member multiples of 1."""

    lam: float | None
    lam_bracket: tuple[float, float] | None
    k: float | None
    k_bracket: tuple[float, float] | None


def diagonal_requirements(
    market: MarketModel,
    agg: AggregationSpec,
    criterion: AcceptanceCriterion,
    tol: float = 1e-4,
) -> DiagonalSolution:
    """Scalar bisections along the diagonal of both risk sets.

    Finds the smallest lam with lam * 1 an intrinsic member and the smallest
    k with k * 1 a monetary member, each to bracket width tol.  Components
    are None when no member exists on the searched ray.
    """
    d = market.d
    ones = np.ones(d)

    def mem_int(lam: float) -> bool:
        return is_member_intrinsic(lam * ones, market, agg, criterion)

    def mem_mon(k: float) -> bool:
        return is_member_monetary(k * ones, market, agg, criterion)

    if mem_int(0.0):
        lam_star, lam_bracket = 0.0, (0.0, 0.0)
    elif not mem_int(1.0):
        lam_star, lam_bracket = None, None
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mem_int(mid):
                hi = mid
            else:
                lo = mid
        lam_star, lam_bracket = hi, (lo, hi)

    scale = float(np.max(market.x0))
    hi = scale
    for _ in range(60):
        if mem_mon(hi):
            break
        hi *= 2.0
    else:
        return DiagonalSolution(lam_star, lam_bracket, None, None)
    lo = -scale
    while mem_mon(lo):
        lo *= 2.0
        if lo < -1e12:
            return DiagonalSolution(lam_star, lam_bracket, None, None)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mem_mon(mid):
            hi = mid
        else:
            lo = mid
    return DiagonalSolution(lam_star, lam_bracket, hi, (lo, hi))


@dataclass(frozen=True)
class HistogramSummary:
    """Summary statistics plus fixed-width bin counts of an aggregate sample."""

    support_min: float
    support_max: float
    mean: float
    variance: float
    skewness: float
    es: float
    alpha: float
    bin_width: float
    first_edge: float
    counts: tuple[int, ...]

    @classmethod
    def from_samples(cls, values, alpha: float, bin_width: float) -> "HistogramSummary":
        v = np.asarray(values, dtype=float).ravel()
        mean = float(v.mean())
        var = float(v.var())
        sd = math.sqrt(var)
        skew = float(((v - mean) ** 3).mean() / sd**3) if sd > 0 else 0.0
        lo = math.floor(float(v.min()) / bin_width) * bin_width
        nbins = max(1, int(math.ceil((float(v.max()) - lo) / bin_width + 1e-12)))
        edges = lo + bin_width * np.arange(nbins + 1)
        counts, _ = np.histogram(v, bins=edges)
        return cls(
            support_min=float(v.min()),
            support_max=float(v.max()),
            mean=mean,
            variance=var,
            skewness=skew,
            es=empirical_es(v, alpha),
            alpha=alpha,
            bin_width=bin_width,
            first_edge=float(lo),
            counts=tuple(int(c) for c in counts),
        )

    def to_dict(self) -> dict:
        return {
            "support_min": self.support_min,
            "support_max": self.support_max,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "es": self.es,
            "alpha": self.alpha,
            "bin_width": self.bin_width,
            "first_edge": self.first_edge,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.to_dict(), sort_keys=True) + "\n")
            fh.write("bin_left,bin_right,count\n")
            for i, c in enumerate(self.counts):
                left = self.first_edge + i * self.bin_width
                right = left + self.bin_width
                fh.write(f"{left:.17g},{right:.17g},{c}\n")


def histogram_report(
    market: MarketModel,
    agg: AggregationSpec,
    lam_star,
    k_star,
    alpha: float = 0.05,
    bin_width: float = 0.005,
) -> dict[str, HistogramSummary]:
    """Aggregate-outcome summaries of the four systems over one scenario set:
    original, intrinsic at lam_star, monetary at k_star, and all-eligible."""
    lam_star = np.asarray(lam_star, dtype=float)
    k_star = np.asarray(k_star, dtype=float)
    systems = {
        "original": market.xt.samples,
        "intrinsic": intrinsic_system(market, lam_star).samples,
        "monetary": monetary_wealth(market, k_star),
        "eligible": market.all_eligible_wealth(),
    }
    out = {}
    for name, wealth in systems.items():
        values = aggregate_scenarios(wealth, agg)
        out[name] = HistogramSummary.from_samples(values, alpha, bin_width)
    return out


def apply_costs(
    market: MarketModel,
    agg: AggregationSpec,
    costs: CostSpec,
    lam=None,
    k=None,
) -> np.ndarray:
    """Aggregate outcomes after friction-adjusted restructuring.

    Intrinsic action (lam): the sell and buy legs each cost transaction_rate
    of the traded value lam * x0, charged against terminal wealth before
    clearing.  Monetary action (k): the buy leg costs transaction_rate of k
    and raising k externally costs cost_of_debt * k.
    """
    if (lam is None) == (k is None):
        raise ValidationError("pass exactly one of lam or k")
    if lam is not None:
        lam = np.asarray(lam, dtype=float)
        wealth = intrinsic_system(market, lam).samples - 2.0 * costs.transaction_rate * (
            lam * market.x0
        )
    else:
        k = np.asarray(k, dtype=float)
        wealth = monetary_wealth(market, k) - (costs.transaction_rate + costs.cost_of_debt) * k
    return aggregate_scenarios(wealth, agg)


def _membership_value(market, agg, criterion, lam) -> float:
    w = intrinsic_system(market, lam).samples
    return float(criterion.value(aggregate_scenarios(w, agg)))


def _run_sweep_value(cfg: StudyConfig, value, out_dir: Path) -> dict:
    market, agg, tag = _study_ingredients(cfg, value)
    criterion = cfg.criterion
    entry = {"value": value, "tag": tag, "files": []}

    feasible = is_member_intrinsic(np.ones(market.d), market, agg, criterion)
    entry["all_eligible_acceptable"] = bool(feasible)
    meta = {
        "seed": cfg.seed,
        "N": cfg.n_scenarios,
        "criterion": criterion.to_dict(),
        "beta": cfg.beta,
        "sweep_value": value,
        "feasible_flag": bool(feasible),
    }

    if feasible:
        bi = boundary_intrinsic(
            market, agg, criterion, grid_step=cfg.grid_step, epsilon=cfg.epsilon
        )
        path = out_dir / f"boundary_{tag}.csv"
        bi.to_csv(path, meta)
        entry["files"].append(path.name)
        entry["intrinsic_points"] = len(bi.points)
    else:
        members = full_grid_scan(market, agg, criterion, grid_step=cfg.grid_step)
        path = out_dir / f"fullgrid_{tag}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write(",".join(["point_index"] + [f"lambda_{i + 1}" for i in range(market.d)]))
            fh.write("\n")
            for i, lam in enumerate(members):
                fh.write(",".join([str(i)] + [f"{v:.17g}" for v in lam]) + "\n")
        entry["files"].append(path.name)
        entry["intrinsic_points"] = int(members.shape[0])

    box = cfg.monetary_box or default_monetary_box(market)
    try:
        bm = boundary_monetary(
            market,
            agg,
            criterion,
            grid_step=cfg.grid_step * (box[1] - box[0]),
            epsilon=cfg.epsilon,
            box=box,
        )
        path = out_dir / f"boundary_monetary_{tag}.csv"
        bm.to_csv(path, meta)
        entry["files"].append(path.name)
        entry["monetary_points"] = len(bm.points)
    except InfeasibleError as exc:
        entry["monetary_error"] = str(exc)

    if cfg.with_minimal and feasible:
        mp = minimal_points(
            market,
            agg,
            criterion,
            plane_grid_step=cfg.plane_grid_step,
            delta=cfg.delta,
        )
        path = out_dir / f"minimal_{tag}.csv"
        mp.to_csv(path, meta)
        entry["files"].append(path.name)
        entry["k_min"] = mp.k_min
    return entry


def _run_histogram_value(cfg: StudyConfig, value, out_dir: Path) -> dict:
    market, agg, tag = _study_ingredients(cfg, value)
    criterion = cfg.criterion
    entry = {"value": value, "tag": tag, "files": []}
    sol = diagonal_requirements(market, agg, criterion, tol=cfg.diagonal_tol)
    entry["diagonal"] = {
        "lam": sol.lam,
        "lam_bracket": sol.lam_bracket,
        "k": sol.k,
        "k_bracket": sol.k_bracket,
    }
    if sol.lam is None or sol.k is None:
        entry["error"] = "no diagonal member found"
        return entry
    d = market.d
    lam_vec = sol.lam * np.ones(d)
    k_vec = sol.k * np.ones(d)
    report = histogram_report(
        market, agg, lam_vec, k_vec, alpha=cfg.alpha, bin_width=cfg.bin_width
    )
    systems = {
        "original": market.xt.samples,
        "intrinsic": intrinsic_system(market, lam_vec).samples,
        "monetary": monetary_wealth(market, k_vec),
        "eligible": market.all_eligible_wealth(),
    }
    for name, summary in report.items():
        hist_path = out_dir / f"histogram_{name}_{tag}.csv"
        summary.write_csv(hist_path)
        agg_path = out_dir / f"aggregates_{name}_{tag}.csv"
        write_aggregates_csv(agg_path, aggregate_scenarios(systems[name], agg))
        entry["files"] += [hist_path.name, agg_path.name]
        entry.setdefault("summaries", {})[name] = summary.to_dict()

    if cfg.kind == "costs":
        base_int = aggregate_scenarios(systems["intrinsic"], agg)
        base_mon = aggregate_scenarios(systems["monetary"], agg)
        cost_int = apply_costs(market, agg, cfg.costs, lam=lam_vec)
        cost_mon = apply_costs(market, agg, cfg.costs, k=k_vec)
        entry["cost_deltas"] = {
            "intrinsic": {
                "es": empirical_es(cost_int, cfg.alpha) - empirical_es(base_int, cfg.alpha),
                "mean": float(cost_int.mean() - base_int.mean()),
                "support_min": float(cost_int.min() - base_int.min()),
            },
            "monetary": {
                "es": empirical_es(cost_mon, cfg.alpha) - empirical_es(base_mon, cfg.alpha),
                "mean": float(cost_mon.mean() - base_mon.mean()),
                "support_min": float(cost_mon.min() - base_mon.min()),
            },
        }
        for name, values in (("intrinsic_costs", cost_int), ("monetary_costs", cost_mon)):
            path = out_dir / f"aggregates_{name}_{tag}.csv"
            write_aggregates_csv(path, values)
            entry["files"].append(path.name)
    return entry


# Sweep kinds whose member sets shrink as the swept value grows; for the
# others the sets grow, so the nestedness re-test runs the opposite way.
_SHRINKS_WITH_VALUE = {"corr_X": True, "liab_society": True, "liab_bilateral": False}


def _nestedness_checks(cfg: StudyConfig, entries, out_dir: Path, slack: float = 1e-3):
    """Re-test certified boundary points of the smaller set in the larger one."""
    if cfg.kind not in _SHRINKS_WITH_VALUE:
        return None
    shrinks = _SHRINKS_WITH_VALUE[cfg.kind]
    ordered = sorted(entries, key=lambda e: e["value"])
    checks = []
    for small, large in zip(ordered[1:], ordered[:-1]) if shrinks else zip(
        ordered[:-1], ordered[1:]
    ):
        small_path = out_dir / f"boundary_{small['tag']}.csv"
        if not small_path.exists():
            continue
        pts = _read_boundary_points(small_path)
        market, agg, _ = _study_ingredients(cfg, large["value"])
        criterion = cfg.criterion
        violations = 0
        for lam in pts:
            if _membership_value(market, agg, criterion, lam) > slack:
                violations += 1
        checks.append(
            {
                "smaller_set_value": small["value"],
                "larger_set_value": large["value"],
                "points": len(pts),
                "violations": violations,
                "slack": slack,
                "pass": violations == 0,
            }
        )
    return checks


def _read_boundary_points(path) -> list[np.ndarray]:
    points = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                lam_cols = [i for i, h in enumerate(header) if h.startswith("lambda_")]
                continue
            cells = line.split(",")
            points.append(np.array([float(cells[i]) for i in lam_cols]))
    return points


def run_study(cfg: StudyConfig, out_dir) -> Path:
    """Run one study and write its artifacts; returns the output directory.

    Deterministic for fixed (config, seed): all sweep values reuse the same
    seed so differences across files reflect only the swept parameter, and
    no timestamps enter the outputs.  Sweep values may run in parallel;
    the manifest is written last.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = _run_histogram_value if cfg.kind in ("histograms", "costs") else _run_sweep_value
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            entries = list(pool.map(lambda v: runner(cfg, v, out_dir), cfg.sweep))
    else:
        entries = [runner(cfg, v, out_dir) for v in cfg.sweep]

    manifest = {
        "config": cfg.to_dict(),
        "library_version": __version__,
        "clearing_backend": clearing_backend(),
        "entries": entries,
    }
    checks = _nestedness_checks(cfg, entries, out_dir)
    if checks is not None:
        manifest["nestedness_checks"] = checks
        with open(out_dir / "checks.json", "w") as fh:
            json.dump({"nestedness": checks}, fh, indent=2, sort_keys=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out_dir
