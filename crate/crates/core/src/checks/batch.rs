//! Batch-level diagnostics: interval coverage, consistency and sample extraction.

use crate::error::{Error, Result};
use crate::estimator::{two_sided_quantile, wald_interval, wald_variance, VarianceMode};
use crate::simulation::ReplicateBatch;
use serde::{Deserialize, Serialize};

/// Attached to every verdict derived from a simulation.
pub const CALIBRATION_NOTE: &str =
    "thresholds are desk-scale calibrations; no finite-n convergence rates are available";

/// Replicates above this fraction of degenerate empirical denominators make a batch unusable.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRate {
    /// Fraction of non-degenerate replicates whose interval contains `q_true`.
    pub coverage: f64,
    pub covered: usize,
    pub evaluated: usize,
    pub degenerate_count: usize,
    pub level: f64,
    pub mode: VarianceMode,
}

/// Fraction of intervals `[lo, hi]` containing the matching truth.
pub fn interval_coverage(intervals: &[(f64, f64)], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() || intervals.is_empty() {
        return Err(Error::InvalidSamples(format!(
            "{} intervals for {} true values",
            intervals.len(),
            truths.len()
        )));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|((lo, hi), q)| lo <= *q && *q <= hi)
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Coverage of the per-replicate Wald intervals, skipping degenerate replicates.
pub fn ci_coverage_rate(
    batch: &ReplicateBatch,
    level: f64,
    mode: VarianceMode,
) -> Result<CoverageRate> {
    let z = two_sided_quantile(level)?;
    let n = batch.config.n;
    let mut intervals = Vec::new();
    let mut truths = Vec::new();
    let mut degenerate_count = 0;
    for r in &batch.records {
        if !r.q_true.is_finite() {
            return Err(Error::MissingTrueValue(r.index));
        }
        let variance = wald_variance(r.f1, r.f2, n, mode);
        if variance == 0.0 {
            degenerate_count += 1;
            continue;
        }
        intervals.push(wald_interval(r.q_hat, variance, n, z));
        truths.push(r.q_true);
    }
    let coverage = if intervals.is_empty() {
        f64::NAN
    } else {
        interval_coverage(&intervals, &truths)?
    };
    Ok(CoverageRate {
        coverage,
        covered: (coverage * truths.len() as f64).round() as usize,
        evaluated: truths.len(),
        degenerate_count,
        level,
        mode,
    })
}

/// Fraction of replicates with `|Q̂/Q - 1| > tolerance`; `Q = 0` counts unless `Q̂ = 0` too.
pub fn ratio_exceedance(batch: &ReplicateBatch, tolerance: f64) -> f64 {
    let exceed = batch
        .records
        .iter()
        .filter(|r| {
            if r.q_true > 0.0 {
                (r.q_hat / r.q_true - 1.0).abs() > tolerance
            } else {
                r.q_hat != 0.0
            }
        })
        .count();
    exceed as f64 / batch.records.len() as f64
}

/// Non-degenerate `z_empirical` values; errors when more than 10% are degenerate.
pub fn z_empirical_samples(batch: &ReplicateBatch) -> Result<Vec<f64>> {
    let total = batch.records.len();
    let degenerate = batch.records.iter().filter(|r| r.degenerate).count();
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * total as f64 {
        return Err(Error::TooManyDegenerate { degenerate, total });
    }
    Ok(batch.records.iter().filter_map(|r| r.z_empirical).collect())
}

/// Sample variance with divisor `m - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
}
