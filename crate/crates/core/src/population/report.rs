//! Finite-`n` trackers for the CLT conditions.
//!
//! The conditions are limits in `n`; a report only tabulates their trackers
//! along a grid. `classify` applies caller-supplied thresholds to the last
//! grid point and labels the outcome as heuristic.

use super::family::FamilySpec;
use super::model::{build_model, TruncationPolicy};
use super::occupancy::{expected_fj, lindeberg_statistic, s_squared};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILONS: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindebergPoint {
    pub epsilon: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub n: u64,
    pub kept_atoms: usize,
    pub tail_mass_bound: f64,
    pub ef1: f64,
    pub ef2: f64,
    /// tracks `limsup E F_1/n < 1`
    pub ef1_over_n: f64,
    pub ef2_over_n: f64,
    /// tracks `E F_1 + E F_2 → ∞`
    pub ef1_plus_ef2: f64,
    pub s_sq: f64,
    pub lindeberg: Vec<LindebergPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: FamilySpec,
    pub epsilon_grid: Vec<f64>,
    pub records: Vec<ConditionRecord>,
    pub note: String,
}

fn check_grid<T: PartialOrd + Copy>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

fn record_at(
    spec: &FamilySpec,
    n: u64,
    epsilons: &[f64],
    policy: TruncationPolicy,
) -> Result<ConditionRecord> {
    let model = build_model(spec, n, policy)?;
    let ef1 = expected_fj(&model, n, 1)?;
    let ef2 = if n >= 2 {
        expected_fj(&model, n, 2)?
    } else {
        0.0
    };
    let nf = n as f64;
    let lindeberg = epsilons
        .iter()
        .map(|&epsilon| {
            Ok(LindebergPoint {
                epsilon,
                value: lindeberg_statistic(&model, n, epsilon)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConditionRecord {
        n,
        kept_atoms: model.len(),
        tail_mass_bound: model.truncation().tail_mass_bound,
        ef1,
        ef2,
        ef1_over_n: ef1 / nf,
        ef2_over_n: ef2 / nf,
        ef1_plus_ef2: ef1 + ef2,
        s_sq: s_squared(&model, nf),
        lindeberg,
    })
}

pub fn condition_report(
    spec: &FamilySpec,
    n_grid: &[u64],
    epsilon_grid: &[f64],
    policy: TruncationPolicy,
) -> Result<ConditionReport> {
    check_grid("n", n_grid)?;
    check_grid("epsilon", epsilon_grid)?;
    if n_grid[0] == 0 {
        return Err(Error::ZeroSampleSize);
    }
    if epsilon_grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("epsilons must be positive".into()));
    }
    let records = n_grid
        .par_iter()
        .map(|&n| record_at(spec, n, epsilon_grid, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionReport {
        family: spec.clone(),
        epsilon_grid: epsilon_grid.to_vec(),
        records,
        note: "finite-n trackers on a finite epsilon grid; the conditions themselves are limits \
               and are not decided by this report"
            .into(),
    })
}

/// User thresholds for a heuristic reading of a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    /// `E F_1/n` at the largest `n` must stay below this.
    pub max_ef1_over_n: f64,
    /// `E F_1 + E F_2` at the largest `n` must exceed this and be increasing.
    pub min_ef1_plus_ef2: f64,
    /// every Lindeberg value at the largest `n` must fall below this.
    pub max_lindeberg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicVerdict {
    pub coverage_below_one: bool,
    pub occupancy_diverging: bool,
    pub lindeberg_vanishing: bool,
    pub label: &'static str,
}

impl ConditionReport {
    pub fn classify(&self, t: &ClassifyThresholds) -> Option<HeuristicVerdict> {
        let last = self.records.last()?;
        let increasing = self
            .records
            .windows(2)
            .all(|w| w[1].ef1_plus_ef2 > w[0].ef1_plus_ef2);
        Some(HeuristicVerdict {
            coverage_below_one: last.ef1_over_n < t.max_ef1_over_n,
            occupancy_diverging: increasing && last.ef1_plus_ef2 > t.min_ef1_plus_ef2,
            lindeberg_vanishing: last.lindeberg.iter().all(|p| p.value < t.max_lindeberg),
            label: "heuristic: finite-n thresholds, not a proof of the limit",
        })
    }
}
