"""Command-line entry point.

Subcommands: simulate, clear, risk, boundary, minimal, study, histogram.
Configuration comes from JSON files; the seed resolution order is the
SYSRISK_SEED environment variable, then --seed, then the config value.
Failures exit nonzero after printing a one-line JSON error report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clearing import (
    AggregationSpec,
    clearing_picard,
    liabilities_from_csv,
    liabilities_from_json,
    symmetric_liabilities,
)
from .errors import SysriskError, ValidationError
from .risk import AcceptanceCriterion, empirical_es, empirical_var
from .scenarios import MarketConfig, sample_market
from .setvalued import boundary_intrinsic, boundary_monetary, full_grid_scan, minimal_points
from .studies import (
    STUDY_KINDS,
    StudyConfig,
    base_market_config,
    diagonal_requirements,
    load_study_config,
    run_study,
)


def _resolve_seed(args_seed, config_seed):
    env = os.environ.get("SYSRISK_SEED")
    if env is not None:
        return int(env)
    if args_seed is not None:
        return int(args_seed)
    return config_seed


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _cmd_simulate(args) -> int:
    cfg = MarketConfig.from_json(args.config)
    seed = _resolve_seed(args.seed, cfg.seed)
    market = sample_market(cfg, seed=seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    market.xt.to_csv(out / "positions.csv")
    market.st.to_csv(out / "eligibles.csv")
    meta = {
        "seed": seed,
        "n_scenarios": market.n,
        "d": market.d,
        "x0": list(market.x0),
        "s0": list(market.s0),
        "library_version": __version__,
    }
    with open(out / "market_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(json.dumps({"out": str(out), "n": market.n, "d": market.d, "seed": seed}))
    return 0


def _load_liabilities(args):
    path = Path(args.liabilities)
    if path.suffix.lower() == ".csv":
        return liabilities_from_csv(path)
    return liabilities_from_json(path)


def _cmd_clear(args) -> int:
    liab = _load_liabilities(args)
    x = np.array([float(v) for v in args.x.split(",")])
    cv = clearing_picard(x, liab, tol=args.tol)
    report = {
        "payments": [float(p) for p in cv.payments],
        "residual": cv.residual,
        "defaulting": list(cv.defaulting),
    }
    if args.beta is not None:
        spec = AggregationSpec(liab, args.beta)
        report["aggregate"] = float(
            cv.payments @ liab.to_society - args.beta * liab.society_claims
        )
    print(json.dumps(report))
    return 0


def _read_sample_column(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            cell = cells[-1]
            try:
                values.append(float(cell))
            except ValueError:
                continue  # header row
    if not values:
        raise ValidationError(f"{path}: no numeric samples found")
    return np.array(values)


def _cmd_risk(args) -> int:
    samples = _read_sample_column(args.samples)
    if args.kind == "var":
        value = empirical_var(samples, args.alpha)
    else:
        value = empirical_es(samples, args.alpha)
    print(f"{value:.17g}")
    return 0


def _study_config_from_args(args) -> StudyConfig:
    cfg = load_study_config(args.config)
    if getattr(args, "kind", None):
        cfg = StudyConfig(**{**cfg.to_dict(), "kind": args.kind, "sweep": ()})
    seed = _resolve_seed(args.seed, cfg.seed)
    overrides = {"seed": seed}
    if getattr(args, "threads", None):
        overrides["threads"] = args.threads
    return load_study_config({**cfg.to_dict(), **overrides})


def _single_market(cfg: StudyConfig):
    market = sample_market(base_market_config(cfg))
    agg = AggregationSpec(
        symmetric_liabilities(cfg.d, cfg.bilateral_liability, cfg.society_liability),
        cfg.beta,
    )
    return market, agg


def _cmd_boundary(args) -> int:
    cfg = _study_config_from_args(args)
    market, agg = _single_market(cfg)
    criterion = cfg.criterion
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": cfg.seed, "N": cfg.n_scenarios, "criterion": criterion.to_dict(),
            "beta": cfg.beta}
    if args.monetary:
        approx = boundary_monetary(
            market, agg, criterion, grid_step=cfg.grid_step, epsilon=cfg.epsilon,
            box=cfg.monetary_box,
        )
        path = out / "boundary_monetary.csv"
    else:
        approx = boundary_intrinsic(
            market, agg, criterion, grid_step=cfg.grid_step, epsilon=cfg.epsilon
        )
        path = out / "boundary_intrinsic.csv"
    approx.to_csv(path, meta)
    print(json.dumps({"out": str(path), "points": len(approx.points)}))
    return 0


def _cmd_minimal(args) -> int:
    cfg = _study_config_from_args(args)
    market, agg = _single_market(cfg)
    weights = None
    if args.weights:
        weights = np.array([float(v) for v in args.weights.split(",")])
    result = minimal_points(
        market,
        agg,
        cfg.criterion,
        plane_grid_step=cfg.plane_grid_step,
        delta=cfg.delta,
        weights=weights,
        prune=not args.no_prune,
    )
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "minimal_points.csv"
    result.to_csv(path, {"seed": cfg.seed, "N": cfg.n_scenarios, "beta": cfg.beta})
    print(json.dumps({"out": str(path), "k_min": result.k_min,
                      "points": int(result.minimal_points.shape[0])}))
    return 0


def _cmd_study(args) -> int:
    cfg = _study_config_from_args(args)
    out = Path(args.out or f"study_{cfg.kind}")
    run_study(cfg, out)
    print(json.dumps({"out": str(out), "kind": cfg.kind, "sweep": list(cfg.sweep)}))
    return 0


def _cmd_histogram(args) -> int:
    cfg = _study_config_from_args(args)
    market, agg = _single_market(cfg)
    sol = diagonal_requirements(market, agg, cfg.criterion, tol=cfg.diagonal_tol)
    report = {"lam": sol.lam, "k": sol.k}
    if sol.lam is not None and sol.k is not None:
        from .studies import histogram_report

        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        summaries = histogram_report(
            market,
            agg,
            sol.lam * np.ones(cfg.d),
            sol.k * np.ones(cfg.d),
            alpha=cfg.alpha,
            bin_width=cfg.bin_width,
        )
        for name, summary in summaries.items():
            summary.write_csv(out / f"histogram_{name}.csv")
            report[name] = summary.to_dict()
        report["out"] = str(out)
    print(json.dumps(report))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sysrisk",
        description="Systemic risk measurements on simulated clearing networks",
    )
    parser.add_argument("--version", action="version", version=f"sysrisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a market and export scenario CSVs")
    p.add_argument("--config", required=True, help="market config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("clear", help="clearing payments for one wealth vector")
    p.add_argument("--liabilities", required=True, help="liability matrix CSV or JSON")
    p.add_argument("--x", required=True, help="comma-separated wealth vector")
    p.add_argument("--beta", type=float, help="also report the aggregate outcome")
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=_cmd_clear)

    p = sub.add_parser("risk", help="empirical VaR/ES of a sample CSV")
    p.add_argument("--kind", choices=["var", "es"], default="es")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--samples", required=True, help="CSV; last column holds the values")
    p.set_defaults(func=_cmd_risk)

    for name, fn in (("boundary", _cmd_boundary), ("minimal", _cmd_minimal)):
        p = sub.add_parser(name, help=f"{name} search on the configured base market")
        p.add_argument("--config", required=True, help="study config JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "boundary":
            p.add_argument("--monetary", action="store_true")
        else:
            p.add_argument("--weights", help="comma-separated positive weights")
            p.add_argument("--no-prune", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("study", help="run a full case study sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=list(STUDY_KINDS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("histogram", help="diagonal solutions plus outcome histograms")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_histogram)
    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SysriskError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
