"""Partial-identification bounds for complier effects in 2^K factorial designs."""

from .design import (
    ContrastVector,
    FactorialDesign,
    enumerate_assignments,
    interaction_contrast,
    main_effect_contrast,
)
from .errors import (
    AssumptionViolationError,
    EmptyGroupError,
    FactorBoundsError,
    GenerationError,
    InsufficientDataError,
    InvalidDesignError,
    InvalidFactorError,
    InvalidInputError,
    InvalidShareError,
    NoCompliersError,
    WeakFirstStageError,
)
from .oracle import (
    Interval,
    ITTReport,
    adjusted_bounds,
    conservative_bounds,
    exclusion_bounds,
    interaction_bounds,
    interaction_effect,
    itt_report,
    joint_bounds,
    joint_interaction_effect,
    main_effect,
    simple_bounds,
    wald_ratio,
)
from .population import (
    ComplianceProfile,
    GroupShares,
    Population,
    check_conditional_monotonicity,
    check_conditional_treatment_exclusion,
    check_joint_least_compliant,
    check_least_compliant_profile,
    check_weak_treatment_exclusion,
    classify,
    fixture_p4,
    group_shares,
    load_population,
    save_population,
)
from .data import ObservedDataset, load_csv, save_csv
from .estimate import (
    ArmSummary,
    BoundsEstimate,
    ConfidenceInterval,
    WaldEstimate,
    choose_profile_min,
    endpoint_ses,
    estimate_bounds,
    im_critical_value,
    imbens_manski_ci,
    nu_hat_table,
    summarize,
    wald_reference,
)
from .simulate import (
    CoverageReport,
    FactorSpec,
    OutcomeSpec,
    ScenarioConfig,
    TargetSpec,
    census_dataset,
    complete_randomization,
    generate_population,
    load_scenario,
    monte_carlo,
    observe,
    save_scenario,
)

__version__ = "0.1.0"
