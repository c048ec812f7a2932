//! Truncated, normalized species-probability vectors.
//!
//! Atoms are `p_i ∝ p_n(i)` for `i = 1, 2, ...`. Infinite families are cut at
//! the first `I` with `n · tail ≤ tolerance`, where `tail` is a proven upper
//! bound on the discarded (normalized) mass; the kept atoms are renormalized.
//!
//! * Pareto: `Σ_{k>I} (k+1)^{-b} ≤ I^{1-b}/(b-1)` by integral comparison, divided
//!   by the kept partial sum (a lower bound on the full sum).
//! * Exponential: the atoms are geometric with ratio `r = e^{-1/a}`, so the
//!   normalized tail is exactly `r^I`.
//! * Two-step: `⌈a_1⌉` atoms at level `w_1/a_1` then `⌈a_2⌉` at `w_2/a_2`; no truncation.

use super::family::{FamilySpec, TwoStepParams};
use super::integral::estimate_ef1;
use crate::error::{Error, Result};
use crate::io::format::fmt_f64;
use crate::numeric::neumaier_sum;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_MAX_ATOMS: usize = 10_000_000;

/// Truncation controls for infinite families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Bound on `n · tail_mass`; `None` selects `0.01 · max(1, sqrt(E F_1 estimate))`.
    pub tolerance: Option<f64>,
    pub max_atoms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }
}

impl TruncationPolicy {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance: Some(tolerance),
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub kept_atoms: usize,
    /// Upper bound on the normalized mass discarded before renormalization.
    pub tail_mass_bound: f64,
    /// Tolerance the truncation was solved against (0 for finite families).
    pub tolerance: f64,
    pub renormalized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    family: FamilySpec,
    /// Sample size the family parameters were resolved at.
    n: u64,
    probs: Vec<f64>,
    truncation: Truncation,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_step: Option<TwoStepParams>,
}

impl PopulationModel {
    /// Wraps an explicit probability vector; weights are sorted and normalized.
    pub fn explicit(weights: &[f64]) -> Result<Self> {
        build_model(
            &FamilySpec::Explicit {
                weights: weights.to_vec(),
            },
            1,
            TruncationPolicy::default(),
        )
    }

    pub fn family(&self) -> &FamilySpec {
        &self.family
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Species probabilities in nonincreasing order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn two_step_params(&self) -> Option<&TwoStepParams> {
        self.two_step.as_ref()
    }

    /// Writes `index<TAB>probability` rows, one per atom, indices from 1.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(out, "{}\t{}", i + 1, fmt_f64(*p))?;
        }
        Ok(())
    }
}

fn normalize(weights: Vec<f64>) -> Vec<f64> {
    let total = neumaier_sum(weights.iter().copied());
    weights.into_iter().map(|w| w / total).collect()
}

fn check_cap(required: f64, policy: &TruncationPolicy) -> Result<usize> {
    if !(required.is_finite() && required <= policy.max_atoms as f64) {
        let required = if required.is_finite() {
            required as u64
        } else {
            u64::MAX
        };
        return Err(Error::AtomCapExceeded {
            required,
            cap: policy.max_atoms,
        });
    }
    Ok((required as usize).max(1))
}

fn resolve_tolerance(spec: &FamilySpec, n: u64, policy: &TruncationPolicy) -> Result<f64> {
    let tol = match policy.tolerance {
        Some(t) => t,
        None => 0.01 * estimate_ef1(spec, n)?.sqrt().max(1.0),
    };
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation tolerance must be positive, got {tol}"
        )));
    }
    Ok(tol)
}

// Pareto atoms are (i+1)^{-b}; `a` cancels on normalization.
const PARETO_PILOT: usize = 64;

fn build_pareto(
    b: f64,
    n: u64,
    tol: f64,
    policy: &TruncationPolicy,
) -> Result<(Vec<f64>, Truncation)> {
    let weight = |i: usize| ((i + 1) as f64).powf(-b);
    let pilot = neumaier_sum((1..=PARETO_PILOT).map(weight));
    // n * I^{1-b} / ((b-1) * pilot) <= tol
    let required = ((n as f64) / (tol * (b - 1.0) * pilot))
        .powf(1.0 / (b - 1.0))
        .ceil();
    let kept = check_cap(required, policy)?.max(PARETO_PILOT);
    let weights: Vec<f64> = (1..=kept).map(weight).collect();
    let kept_sum = neumaier_sum(weights.iter().copied());
    let tail_mass_bound = (kept as f64).powf(1.0 - b) / ((b - 1.0) * kept_sum);
    Ok((
        normalize(weights),
        Truncation {
            kept_atoms: kept,
            tail_mass_bound,
            tolerance: tol,
            renormalized: true,
        },
    ))
}

fn build_exponential(
    a: f64,
    n: u64,
    tol: f64,
    policy: &TruncationPolicy,
) -> Result<(Vec<f64>, Truncation)> {
    // Normalized tail after I atoms is exactly r^I with r = e^{-1/a}.
    let required = (a * ((n as f64) / tol).ln()).ceil().max(1.0);
    let kept = check_cap(required, policy)?;
    let weights: Vec<f64> = (1..=kept).map(|i| (-(i as f64) / a).exp()).collect();
    let tail_mass_bound = (-(kept as f64) / a).exp();
    Ok((
        normalize(weights),
        Truncation {
            kept_atoms: kept,
            tail_mass_bound,
            tolerance: tol,
            renormalized: true,
        },
    ))
}

fn build_two_step(
    params: &TwoStepParams,
    policy: &TruncationPolicy,
) -> Result<(Vec<f64>, Truncation)> {
    let k1 = params.a1.ceil();
    let k2 = if params.w2 > 0.0 {
        params.a2.ceil()
    } else {
        0.0
    };
    let kept = check_cap(k1 + k2, policy)?;
    let (k1, k2) = (k1 as usize, k2 as usize);
    let mut weights = Vec::with_capacity(kept);
    weights.extend(std::iter::repeat_n(params.w1 / params.a1, k1));
    weights.extend(std::iter::repeat_n(params.w2 / params.a2, k2));
    let renormalized = (params.a1.fract() != 0.0) || (k2 > 0 && params.a2.fract() != 0.0);
    Ok((
        normalize(weights),
        Truncation {
            kept_atoms: k1 + k2,
            tail_mass_bound: 0.0,
            tolerance: 0.0,
            renormalized,
        },
    ))
}

/// Builds the atoms of `spec` at sample size `n`.
pub fn build_model(spec: &FamilySpec, n: u64, policy: TruncationPolicy) -> Result<PopulationModel> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let mut two_step = None;
    let (probs, truncation) = match spec {
        FamilySpec::Explicit { weights } => {
            if weights.len() > policy.max_atoms {
                return Err(Error::AtomCapExceeded {
                    required: weights.len() as u64,
                    cap: policy.max_atoms,
                });
            }
            let mut sorted = weights.clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            let renormalized = neumaier_sum(sorted.iter().copied()) != 1.0;
            let kept = sorted.len();
            (
                normalize(sorted),
                Truncation {
                    kept_atoms: kept,
                    tail_mass_bound: 0.0,
                    tolerance: 0.0,
                    renormalized,
                },
            )
        }
        FamilySpec::Pareto { b, .. } => {
            let tol = resolve_tolerance(spec, n, &policy)?;
            build_pareto(*b, n, tol, &policy)?
        }
        FamilySpec::Exponential { scale } => {
            let a = scale.eval(n);
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "exponential scale must be positive, got {a} at n = {n}"
                )));
            }
            let tol = resolve_tolerance(spec, n, &policy)?;
            build_exponential(a, n, tol, &policy)?
        }
        FamilySpec::TwoStep { .. } => {
            let params = spec.two_step_params(n)?;
            two_step = Some(params);
            build_two_step(&params, &policy)?
        }
    };
    Ok(PopulationModel {
        family: spec.clone(),
        n,
        probs,
        truncation,
        two_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::family::Rate;

    fn zeta_minus_one_partial(b: f64, terms: usize) -> f64 {
        (2..=terms + 1).map(|k| (k as f64).powf(-b)).rev().sum()
    }

    #[test]
    fn uniform_is_equal_atoms() {
        for n in [1, 10, 12345] {
            let m = build_model(&FamilySpec::uniform(10), n, TruncationPolicy::default()).unwrap();
            assert_eq!(m.len(), 10);
            assert!(m.probs().iter().all(|&p| (p - 0.1).abs() < 1e-16));
            assert!(!m.truncation().renormalized);
        }
    }

    #[test]
    fn pareto_b3_atom_count_matches_solved_bound() {
        // n a / (2 I^2) <= 0.01 with a = 1/(zeta(3)-1) gives I ≈ 4980.
        let a = 1.0 / zeta_minus_one_partial(3.0, 2_000_000);
        let solved = (1e5 * a / (2.0 * 0.01)).sqrt();
        let m = build_model(
            &FamilySpec::pareto(3.0),
            100_000,
            TruncationPolicy::with_tolerance(0.01),
        )
        .unwrap();
        let kept = m.len() as f64;
        assert!(
            kept >= solved && kept < 1.03 * solved,
            "kept {kept}, solved {solved}"
        );
        assert!((neumaier_sum(m.probs().iter().copied()) - 1.0).abs() < 1e-15);
        assert!(100_000.0 * m.truncation().tail_mass_bound <= 0.01);
    }

    #[test]
    fn pareto_tail_bound_dominates_true_tail() {
        let m = build_model(
            &FamilySpec::pareto(2.5),
            1000,
            TruncationPolicy::with_tolerance(0.1),
        )
        .unwrap();
        let kept = m.len();
        // brute-force partial sums of the true tail
        let total = zeta_minus_one_partial(2.5, 20_000_000);
        let head: f64 = (1..=kept).map(|i| ((i + 1) as f64).powf(-2.5)).sum();
        let true_tail = (total - head) / total;
        assert!(true_tail > 0.0 && true_tail <= m.truncation().tail_mass_bound);
    }

    #[test]
    fn exponential_is_geometric_and_normalized() {
        let m = build_model(
            &FamilySpec::exponential(Rate::Const(100.0)),
            1000,
            TruncationPolicy::default(),
        )
        .unwrap();
        let p = m.probs();
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
        let ratio = (-1.0f64 / 100.0).exp();
        assert!((p[1] / p[0] - ratio).abs() < 1e-14);
        assert!((neumaier_sum(p.iter().copied()) - 1.0).abs() < 1e-15);
        assert!(
            1000.0 * m.truncation().tail_mass_bound <= m.truncation().tolerance * (1.0 + 1e-12)
        );
    }

    #[test]
    fn explicit_weights_sorted_and_normalized() {
        let m = PopulationModel::explicit(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(m.probs(), &[0.5, 1.0 / 3.0, 1.0 / 6.0]);
        assert!(m.truncation().renormalized);
    }

    #[test]
    fn cap_is_reported() {
        let policy = TruncationPolicy {
            tolerance: Some(0.01),
            max_atoms: 1000,
        };
        match build_model(&FamilySpec::pareto(1.5), 1_000_000, policy) {
            Err(Error::AtomCapExceeded { required, cap }) => {
                assert_eq!(cap, 1000);
                assert!(required > 1000);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn two_step_case3_layout() {
        let m = build_model(
            &FamilySpec::example3_case3(),
            100_000,
            TruncationPolicy::default(),
        )
        .unwrap();
        let params = m.two_step_params().unwrap();
        assert_eq!(
            m.len(),
            params.a1.ceil() as usize + params.a2.ceil() as usize
        );
        assert!(m.probs().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn table_export() {
        let m = PopulationModel::explicit(&[0.75, 0.25]).unwrap();
        let mut buf = Vec::new();
        m.write_table(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1\t0.75\n2\t0.25\n");
    }
}
