//! Exact occupancy moments over the kept atoms of a model.
//!
//! Every sum runs over atoms in descending-probability order with Neumaier
//! compensation, so results are reproducible to about one ulp.

use super::model::PopulationModel;
use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, NeumaierSum};
use serde::{Deserialize, Serialize};

/// `E F_j(n) = Σ_i C(n, j) p_i^j (1 - p_i)^{n-j}`, each term evaluated in log space.
pub fn expected_fj(model: &PopulationModel, n: u64, j: u64) -> Result<f64> {
    if j > n {
        return Err(Error::OccupancyOutOfRange { j, n });
    }
    Ok(expected_fj_probs(model.probs(), n, j))
}

pub(crate) fn expected_fj_probs(probs: &[f64], n: u64, j: u64) -> f64 {
    let log_choose = ln_binomial(n, j);
    let (jf, rest) = (j as f64, (n - j) as f64);
    let mut acc = NeumaierSum::new();
    for &p in probs {
        let log_hit = if j == 0 { 0.0 } else { jf * p.ln() };
        let log_miss = if n == j { 0.0 } else { rest * (-p).ln_1p() };
        acc.add((log_choose + log_hit + log_miss).exp());
    }
    acc.total()
}

/// `s_λ^2 = Σ_i [λ p_i e^{-λ p_i} + (λ p_i)^2 e^{-λ p_i}]`.
pub fn s_squared(model: &PopulationModel, lambda: f64) -> f64 {
    s_squared_probs(model.probs(), lambda)
}

pub(crate) fn s_squared_probs(probs: &[f64], lambda: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for &p in probs {
        let t = lambda * p;
        acc.add(t * (1.0 + t) * (-t).exp());
    }
    acc.total()
}

/// `s_n^{-2} Σ_i (n p_i)^2 e^{-n p_i} 1{n p_i > ε s_n}`.
pub fn lindeberg_statistic(model: &PopulationModel, n: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let nf = n as f64;
    let s_sq = s_squared(model, nf);
    if !(s_sq > 0.0) {
        return Err(Error::DegenerateModel);
    }
    let threshold = epsilon * s_sq.sqrt();
    let mut acc = NeumaierSum::new();
    // atoms are sorted by decreasing p, so the indicator set is a prefix
    for &p in model.probs() {
        let t = nf * p;
        if t <= threshold {
            break;
        }
        acc.add(t * t * (-t).exp());
    }
    Ok((acc.total() / s_sq).min(1.0))
}

/// Both sides of `(1-1/n) e^{-ε} s_n^2 - n^2 e^{-√(εn)} ≤ E F_1 + 2 E F_2 ≤ e^{2ε} s_n^2 + n(n+1) e^{-(n-2)ε}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

impl SandwichCheck {
    pub fn holds(&self) -> bool {
        self.lower <= self.middle && self.middle <= self.upper
    }
}

/// Sandwich between the exact multinomial sum `E F_1 + 2 E F_2`
/// and the Poissonized `s_n^2`. Valid for `ε / n ≤ 1/4`.
pub fn occupancy_sandwich(model: &PopulationModel, n: u64, epsilon: f64) -> Result<SandwichCheck> {
    if n < 2 {
        return Err(Error::InvalidParameter("sandwich needs n >= 2".into()));
    }
    let nf = n as f64;
    if !(epsilon > 0.0 && epsilon / nf <= 0.25) {
        return Err(Error::InvalidParameter(format!(
            "sandwich needs 0 < epsilon/n <= 1/4, got epsilon = {epsilon}, n = {n}"
        )));
    }
    let middle = expected_fj(model, n, 1)? + 2.0 * expected_fj(model, n, 2)?;
    let s_sq = s_squared(model, nf);
    let lower =
        (1.0 - 1.0 / nf) * (-epsilon).exp() * s_sq - nf * nf * (-(epsilon * nf).sqrt()).exp();
    let upper = (2.0 * epsilon).exp() * s_sq + nf * (nf + 1.0) * (-(nf - 2.0) * epsilon).exp();
    Ok(SandwichCheck {
        lower,
        middle,
        upper,
    })
}

/// Both sides of `(λ'/λ)^2 s_λ^2 ≤ s_λ'^2 ≤ e^ε s_λ^2 + λ(1+λ) exp(-λ'ε/(λ-λ'))`.
pub fn intensity_sandwich(
    model: &PopulationModel,
    lambda_low: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<SandwichCheck> {
    if !(0.0 < lambda_low && lambda_low < lambda && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda' < lambda and epsilon > 0, got {lambda_low}, {lambda}, {epsilon}"
        )));
    }
    let s_hi = s_squared(model, lambda);
    let middle = s_squared(model, lambda_low);
    let ratio = lambda_low / lambda;
    Ok(SandwichCheck {
        lower: ratio * ratio * s_hi,
        middle,
        upper: epsilon.exp() * s_hi
            + lambda * (1.0 + lambda) * (-lambda_low * epsilon / (lambda - lambda_low)).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{build_model, FamilySpec, Rate, TruncationPolicy};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn uniform_two_atoms() {
        let m = PopulationModel::explicit(&[0.5, 0.5]).unwrap();
        assert!(close(expected_fj(&m, 2, 1).unwrap(), 1.0, 1e-14));
        assert!(close(expected_fj(&m, 2, 0).unwrap(), 0.5, 1e-14));
        assert!(close(expected_fj(&m, 2, 2).unwrap(), 0.5, 1e-14));
    }

    #[test]
    fn single_certain_atom() {
        let m = PopulationModel::explicit(&[1.0]).unwrap();
        assert_eq!(expected_fj(&m, 5, 5).unwrap(), 1.0);
        assert_eq!(expected_fj(&m, 5, 1).unwrap(), 0.0);
        assert_eq!(expected_fj(&m, 5, 0).unwrap(), 0.0);
        let n = 7.0f64;
        assert!(close(
            s_squared(&m, n),
            n * (-n).exp() + n * n * (-n).exp(),
            1e-15
        ));
    }

    #[test]
    fn j_above_n_is_rejected() {
        let m = PopulationModel::explicit(&[1.0]).unwrap();
        assert!(matches!(
            expected_fj(&m, 3, 4),
            Err(Error::OccupancyOutOfRange { j: 4, n: 3 })
        ));
    }

    #[test]
    fn uniform_s_squared() {
        let k = 40u64;
        let m = build_model(&FamilySpec::uniform(k), 1, TruncationPolicy::default()).unwrap();
        let n = 100.0;
        let kf = k as f64;
        let want = n * (-n / kf).exp() * (1.0 + n / kf);
        assert!(close(s_squared(&m, n), want, 1e-13));
    }

    #[test]
    fn lindeberg_empty_indicator_is_zero() {
        // n p = 1 for all atoms while ε s_n ≈ 0.5·sqrt(1000·2/e) ≫ 1
        let m = build_model(&FamilySpec::uniform(1000), 1, TruncationPolicy::default()).unwrap();
        assert_eq!(lindeberg_statistic(&m, 1000, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn lindeberg_degenerate_model() {
        // n p = 1e6 makes e^{-np} underflow to zero
        let m = PopulationModel::explicit(&[1.0]).unwrap();
        assert!(matches!(
            lindeberg_statistic(&m, 1_000_000, 0.1),
            Err(Error::DegenerateModel)
        ));
    }

    #[test]
    fn sandwiches_hold_on_small_models() {
        let specs = [
            FamilySpec::pareto(2.0),
            FamilySpec::pareto(3.0),
            FamilySpec::uniform(100),
            FamilySpec::exponential(Rate::Power {
                coef: 1.0,
                exponent: 0.5,
            }),
        ];
        for spec in &specs {
            for n in [100u64, 1000] {
                let m = build_model(spec, n, TruncationPolicy::default()).unwrap();
                let s = occupancy_sandwich(&m, n, 0.25).unwrap();
                assert!(s.holds(), "{spec} n={n}: {s:?}");
                let nf = n as f64;
                let s = intensity_sandwich(&m, 0.9 * nf, nf, 0.25).unwrap();
                assert!(s.holds(), "{spec} n={n}: {s:?}");
            }
        }
    }

    fn explicit_model() -> impl Strategy<Value = PopulationModel> {
        prop::collection::vec(1e-3f64..1.0, 1..60)
            .prop_map(|w| PopulationModel::explicit(&w).unwrap())
    }

    proptest! {
        #[test]
        fn occupancy_classes_partition_species(m in explicit_model(), n in 1u64..120) {
            let total: f64 = (0..=n).map(|j| expected_fj(&m, n, j).unwrap()).sum();
            prop_assert!(close(total, m.len() as f64, 1e-6));
            let mass: f64 = (1..=n).map(|j| j as f64 * expected_fj(&m, n, j).unwrap()).sum();
            prop_assert!(close(mass, n as f64, 1e-6));
        }

        #[test]
        fn lindeberg_bounded_and_monotone(m in explicit_model(), n in 1u64..5000, e1 in 0.001f64..3.0, e2 in 0.001f64..3.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            if let (Ok(a), Ok(b)) = (lindeberg_statistic(&m, n, lo), lindeberg_statistic(&m, n, hi)) {
                prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn sandwich_holds_for_explicit_models(m in explicit_model(), n in 2u64..3000) {
            let s = occupancy_sandwich(&m, n, 0.25).unwrap();
            prop_assert!(s.holds(), "{:?}", s);
            let nf = n as f64;
            let s = intensity_sandwich(&m, 0.9 * nf, nf, 0.25).unwrap();
            prop_assert!(s.holds(), "{:?}", s);
        }
    }
}
