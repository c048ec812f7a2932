//! Goodness-of-fit verdicts over replicate batches.

mod batch;
mod gof;

pub use batch::{
    ci_coverage_rate, interval_coverage, ratio_exceedance, sample_variance, z_empirical_samples,
    CoverageRate, CALIBRATION_NOTE, MAX_DEGENERATE_FRACTION,
};
pub use gof::{
    chi_square_two_sample, kolmogorov_survival, ks_normal, poisson_gof, qq_max_deviation,
    qq_points, ChiSquareResult, GofResult, Reference,
};
