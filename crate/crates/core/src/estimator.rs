//! Turing-Good coverage estimation from frequency-of-frequencies data.
//!
//! The missing mass `Q_n` (total probability of species absent from a sample
//! of size `n`) is estimated by `F_1 / n`, the fraction of singletons. The
//! Wald interval uses the empirical denominator
//! `F_1 (1 - F_1/n) + 2 F_2` (`esty` mode) or only its first term
//! (`f1-only` mode).

use crate::error::{Error, Result};
use crate::numeric::normal_quantile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// How strictly `Σ j·F_j` must agree with the declared sample size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileMode {
    /// `Σ j·F_j` must equal the declared `n`.
    Strict,
    /// Mismatch is accepted and reported as a warning.
    Declared,
}

/// Map from occupancy level `j >= 1` to the number of species seen exactly `j` times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    counts: BTreeMap<u64, u64>,
    declared_n: u64,
    mode: ProfileMode,
}

impl FrequencyProfile {
    /// Builds a profile from `(j, F_j)` pairs. Zero `F_j` entries are dropped.
    pub fn new<I>(entries: I, declared_n: u64, mode: ProfileMode) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        if declared_n == 0 {
            return Err(Error::ZeroSampleSize);
        }
        let mut counts = BTreeMap::new();
        for (j, fj) in entries {
            if j == 0 {
                return Err(Error::InvalidProfile(
                    "occupancy level j must be >= 1".into(),
                ));
            }
            if fj > declared_n {
                return Err(Error::InvalidProfile(format!(
                    "F_{j} = {fj} exceeds n = {declared_n}"
                )));
            }
            if counts.contains_key(&j) {
                return Err(Error::InvalidProfile(format!(
                    "duplicate entry for j = {j}"
                )));
            }
            if fj > 0 {
                counts.insert(j, fj);
            }
        }
        let profile = Self {
            counts,
            declared_n,
            mode,
        };
        if mode == ProfileMode::Strict && profile.observed_total() != u128::from(declared_n) {
            return Err(Error::InvalidProfile(format!(
                "sum of j*F_j is {} but n = {declared_n}",
                profile.observed_total()
            )));
        }
        Ok(profile)
    }

    /// Tabulates per-species counts; zeros are ignored and `n` is their sum.
    pub fn from_species_counts(species_counts: &[u64]) -> Result<Self> {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let mut n: u64 = 0;
        for &c in species_counts.iter().filter(|&&c| c > 0) {
            *counts.entry(c).or_default() += 1;
            n = n
                .checked_add(c)
                .ok_or_else(|| Error::InvalidProfile("sample size overflows u64".into()))?;
        }
        if n == 0 {
            return Err(Error::NoObservations);
        }
        Ok(Self {
            counts,
            declared_n: n,
            mode: ProfileMode::Strict,
        })
    }

    /// `F_j`, zero when absent.
    pub fn f(&self, j: u64) -> u64 {
        self.counts.get(&j).copied().unwrap_or(0)
    }

    pub fn n(&self) -> u64 {
        self.declared_n
    }

    pub fn mode(&self) -> ProfileMode {
        self.mode
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&j, &f)| (j, f))
    }

    /// `Σ j·F_j`.
    pub fn observed_total(&self) -> u128 {
        self.counts
            .iter()
            .map(|(&j, &f)| u128::from(j) * u128::from(f))
            .sum()
    }

    /// Number of distinct species observed, `Σ F_j`.
    pub fn species_observed(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `(declared n, Σ j·F_j)` when they disagree.
    pub fn mismatch(&self) -> Option<(u64, u128)> {
        let observed = self.observed_total();
        (observed != u128::from(self.declared_n)).then_some((self.declared_n, observed))
    }

    pub fn warnings(&self) -> Vec<String> {
        self.mismatch()
            .map(|(n, observed)| {
                format!("declared n = {n} but sum of j*F_j = {observed}; using declared n")
            })
            .into_iter()
            .collect()
    }

    /// One per-species count for every observed species, in ascending order.
    pub fn to_species_counts(&self) -> Vec<u64> {
        self.counts
            .iter()
            .flat_map(|(&j, &f)| std::iter::repeat_n(j, f as usize))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    #[serde(rename = "esty")]
    Esty,
    #[serde(rename = "f1-only")]
    F1Only,
}

impl fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMode::Esty => "esty",
            VarianceMode::F1Only => "f1-only",
        })
    }
}

impl FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esty" => Ok(VarianceMode::Esty),
            "f1-only" => Ok(VarianceMode::F1Only),
            other => Err(Error::InvalidParameter(format!(
                "variance mode must be 'esty' or 'f1-only', got '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub q_hat: f64,
    /// Squared Wald denominator, in counts².
    pub variance_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub mode: VarianceMode,
    /// Zero variance: the interval collapses to the point estimate.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// `F_1 / n`.
pub fn coverage_estimate(profile: &FrequencyProfile) -> f64 {
    profile.f(1) as f64 / profile.n() as f64
}

/// Empirical denominator `F_1 (1 - F_1/n) + 2 F_2`, or `F_1 (1 - F_1/n)` in `f1-only` mode.
pub fn variance_hat(profile: &FrequencyProfile, mode: VarianceMode) -> f64 {
    wald_variance(profile.f(1), profile.f(2), profile.n(), mode)
}

/// Integer-exact form of the empirical denominator: one final division by `n`.
pub(crate) fn wald_variance(f1: u64, f2: u64, n: u64, mode: VarianceMode) -> f64 {
    debug_assert!(f1 <= n);
    let n128 = u128::from(n);
    let mut numerator = u128::from(f1) * (n128 - u128::from(f1));
    if mode == VarianceMode::Esty {
        numerator += 2 * u128::from(f2) * n128;
    }
    numerator as f64 / n as f64
}

/// `n (q_hat - q_true) / sqrt(denom_sq)`.
pub fn z_statistic(q_hat: f64, q_true: f64, n: u64, denom_sq: f64) -> Result<f64> {
    if !(denom_sq > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(n as f64 * (q_hat - q_true) / denom_sq.sqrt())
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn two_sided_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    Ok(normal_quantile(0.5 * (1.0 + level)))
}

/// Wald interval `q_hat ± z sqrt(variance_hat) / n`, clamped to `[0, 1]`.
pub(crate) fn wald_interval(q_hat: f64, variance: f64, n: u64, z: f64) -> (f64, f64) {
    let half = z * variance.sqrt() / n as f64;
    ((q_hat - half).max(0.0), (q_hat + half).min(1.0))
}

pub fn confidence_interval(
    profile: &FrequencyProfile,
    level: f64,
    mode: VarianceMode,
) -> Result<CoverageEstimate> {
    let z = two_sided_quantile(level)?;
    let q_hat = coverage_estimate(profile);
    let variance = variance_hat(profile, mode);
    let mut warnings = profile.warnings();
    let degenerate = variance == 0.0;
    if degenerate {
        warnings.push("variance estimate is zero; interval collapses to the point estimate".into());
    }
    let (ci_low, ci_high) = wald_interval(q_hat, variance, profile.n(), z);
    Ok(CoverageEstimate {
        q_hat,
        variance_hat: variance,
        ci_low,
        ci_high,
        level,
        mode,
        degenerate,
        warnings,
    })
}
