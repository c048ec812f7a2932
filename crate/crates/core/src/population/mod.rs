//! Species-probability models, exact occupancy sums and CLT condition trackers.

mod family;
mod integral;
mod model;
mod occupancy;
mod report;

pub use family::{FamilySpec, Rate, Step, StepWeight, TwoStepParams};
pub use integral::{
    integral_approximations, pareto_ef1_closed_form, pareto_effective_scale, zeta_minus_one,
    ApproximationMethod, IntegralApproximation,
};
pub use model::{build_model, PopulationModel, Truncation, TruncationPolicy, DEFAULT_MAX_ATOMS};
pub use occupancy::{
    expected_fj, intensity_sandwich, lindeberg_statistic, occupancy_sandwich, s_squared,
    SandwichCheck,
};
pub use report::{
    condition_report, ClassifyThresholds, ConditionRecord, ConditionReport, HeuristicVerdict,
    LindebergPoint, DEFAULT_EPSILONS,
};
