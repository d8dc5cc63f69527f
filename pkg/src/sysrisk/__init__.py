"""Set-valued intrinsic and monetary systemic risk measures for simulated
Eisenberg-Noe clearing networks, with a seeded scenario engine, certified
boundary/minimal-point searches and a case-study CLI."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DomainError,
    InfeasibleError,
    MatrixError,
    NumericalError,
    ResolutionError,
    SysriskError,
    ValidationError,
)
from .scenarios import (
    MarginalSpec,
    MarketConfig,
    MarketModel,
    ScenarioSet,
    beta_moments,
    build_correlation,
    inverse_cdf,
    lognormal_moments,
    lognormal_params_from_moments,
    sample_market,
)
from .clearing import (
    AggregationSpec,
    ClearingVector,
    LiabilityStructure,
    aggregate,
    aggregate_scenarios,
    clearing_backend,
    clearing_fictitious_default,
    clearing_picard,
    liabilities_from_csv,
    liabilities_from_json,
    symmetric_liabilities,
    validate_liabilities,
)
from .risk import (
    AcceptanceCriterion,
    DualCertificate,
    ScalarPosition,
    empirical_es,
    empirical_var,
    es_dual_max,
    is_acceptable,
    scalar_intrinsic_rho,
    scalar_monetary_rho,
)
from .setvalued import (
    BoundaryApproximation,
    BoundaryPoint,
    MinimalPointResult,
    boundary_intrinsic,
    boundary_monetary,
    convex_prune,
    default_monetary_box,
    full_grid_scan,
    intrinsic_system,
    is_member_intrinsic,
    is_member_monetary,
    minimal_points,
    monetary_wealth,
)
from .studies import (
    CostSpec,
    DiagonalSolution,
    HistogramSummary,
    StudyConfig,
    apply_costs,
    base_market_config,
    diagonal_requirements,
    histogram_report,
    load_study_config,
    run_study,
)
