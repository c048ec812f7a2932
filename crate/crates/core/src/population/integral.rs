//! Continuous approximations of `E F_1` and `s_n^2` from the family density.
//!
//! With atoms `p_i = p_n(i) / Σ_k p_n(k)`, the density used here is
//! `q(x) = p_n(x) / Σ_k p_n(k)`, so `q(i) = p_i` on the untruncated model and
//!
//! ```text
//! E F_1 ≈ ∫_0^∞ n q(x) e^{-n q(x)} dx
//! s_n^2 ≈ ∫_0^∞ n q(x) (1 + n q(x)) e^{-n q(x)} dx
//! ```
//!
//! Pareto and exponential densities are integrated numerically on
//! `u = ln(1 + x)`; the two-step density is piecewise constant and uses the
//! closed form `n Σ w_j e^{-b_j}` and `n Σ w_j (1 + b_j) e^{-b_j}`.

use super::family::FamilySpec;
use crate::error::{Error, Result};
use crate::numeric::integrate;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

const REL_TOL: f64 = 1e-6;
// The discarded range contributes at most e^{-TAIL_LOG} times the leading scale.
const TAIL_LOG: f64 = 35.0;
const MAX_LOG_RANGE: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproximationMethod {
    Quadrature,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralApproximation {
    pub ef1_approx: f64,
    pub s_sq_approx: f64,
    pub ef1_error: f64,
    pub s_sq_error: f64,
    pub method: ApproximationMethod,
}

/// `ζ(b) - 1 = Σ_{k≥2} k^{-b}` by direct summation to `K` plus an
/// Euler-Maclaurin remainder (error `O(K^{-b-5})`).
pub fn zeta_minus_one(b: f64) -> f64 {
    const K: usize = 1000;
    let head: f64 = (2..K).rev().map(|k| (k as f64).powf(-b)).sum();
    let k = K as f64;
    let f = k.powf(-b);
    head + k.powf(1.0 - b) / (b - 1.0) + 0.5 * f + b * f / (12.0 * k)
        - b * (b + 1.0) * (b + 2.0) * f / (720.0 * k.powi(3))
}

/// Scale `c` of the Pareto density `c/(x+1)^b` that reproduces the normalized atoms.
pub fn pareto_effective_scale(b: f64) -> f64 {
    1.0 / zeta_minus_one(b)
}

/// `((n c)^{1/b} / b) Γ(1 - 1/b)`, the large-`n` form of the Pareto `E F_1` integral.
pub fn pareto_ef1_closed_form(n: u64, b: f64) -> f64 {
    let c = pareto_effective_scale(b);
    (n as f64 * c).powf(1.0 / b) / b * gamma(1.0 - 1.0 / b)
}

/// Constant `C` in the exponential density `C e^{-x/a}` matching the geometric atoms.
fn exponential_effective_scale(a: f64) -> f64 {
    (1.0 / a).exp_m1()
}

/// Cheap closed-form estimate of `E F_1`, used to pick the default truncation tolerance.
pub(crate) fn estimate_ef1(spec: &FamilySpec, n: u64) -> Result<f64> {
    match spec {
        FamilySpec::Pareto { b, .. } => Ok(pareto_ef1_closed_form(n, *b)),
        FamilySpec::Exponential { scale } => {
            let a = scale.eval(n);
            let c = exponential_effective_scale(a);
            Ok(a * (-(n as f64) * c).exp_m1().abs())
        }
        FamilySpec::TwoStep { .. } => {
            let p = spec.two_step_params(n)?;
            Ok(n as f64 * (p.w1 * (-p.b1).exp() + p.w2 * (-p.b2).exp()))
        }
        FamilySpec::Explicit { .. } => Err(Error::UnsupportedFamily("explicit".into())),
    }
}

fn quadrature<P: Fn(f64) -> f64>(density: P, n: u64, u_max: f64) -> IntegralApproximation {
    let nf = n as f64;
    let term = |u: f64, square: bool| {
        let t = nf * density(u.exp_m1());
        let base = t * (-t).exp() * u.exp();
        if square {
            base * (1.0 + t)
        } else {
            base
        }
    };
    let (ef1, ef1_err) = integrate(|u| term(u, false), 0.0, u_max, REL_TOL);
    let (s_sq, s_sq_err) = integrate(|u| term(u, true), 0.0, u_max, REL_TOL);
    IntegralApproximation {
        ef1_approx: ef1,
        s_sq_approx: s_sq,
        ef1_error: ef1_err,
        s_sq_error: s_sq_err,
        method: ApproximationMethod::Quadrature,
    }
}

fn check_range(u_max: f64, spec: &FamilySpec) -> Result<f64> {
    if !(u_max.is_finite() && u_max <= MAX_LOG_RANGE) {
        return Err(Error::InvalidParameter(format!(
            "integration range too wide for {spec} (ln(1+x_max) = {u_max})"
        )));
    }
    Ok(u_max.max(1.0))
}

pub fn integral_approximations(spec: &FamilySpec, n: u64) -> Result<IntegralApproximation> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    let nf = n as f64;
    match spec {
        FamilySpec::Pareto { b, .. } => {
            let b = *b;
            let c = pareto_effective_scale(b);
            // integrand ~ n c e^{(1-b)u} for large u
            let u_max = check_range(
                ((nf * c / (b - 1.0)).ln().max(0.0) + TAIL_LOG) / (b - 1.0),
                spec,
            )?;
            Ok(quadrature(|x| c * (x + 1.0).powf(-b), n, u_max))
        }
        FamilySpec::Exponential { scale } => {
            let a = scale.eval(n);
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "exponential scale {a} at n = {n}"
                )));
            }
            let c = exponential_effective_scale(a);
            let x_max = a * ((a * nf * c).ln().max(0.0) + TAIL_LOG);
            let u_max = check_range(x_max.ln_1p(), spec)?;
            Ok(quadrature(|x| c * (-x / a).exp(), n, u_max))
        }
        FamilySpec::TwoStep { .. } => {
            let p = spec.two_step_params(n)?;
            let ef1 = nf * (p.w1 * (-p.b1).exp() + p.w2 * (-p.b2).exp());
            let s_sq =
                nf * (p.w1 * (1.0 + p.b1) * (-p.b1).exp() + p.w2 * (1.0 + p.b2) * (-p.b2).exp());
            Ok(IntegralApproximation {
                ef1_approx: ef1,
                s_sq_approx: s_sq,
                ef1_error: 0.0,
                s_sq_error: 0.0,
                method: ApproximationMethod::ClosedForm,
            })
        }
        FamilySpec::Explicit { .. } => Err(Error::UnsupportedFamily(
            "explicit vectors have no density".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::family::Rate;

    #[test]
    fn zeta_values() {
        // ζ(2) = π²/6, ζ(3) = 1.2020569031595942 (Apéry), ζ(4) = π⁴/90.
        let pi = std::f64::consts::PI;
        assert!((zeta_minus_one(2.0) - (pi * pi / 6.0 - 1.0)).abs() < 1e-13);
        assert!((zeta_minus_one(3.0) - 0.202_056_903_159_594_2).abs() < 1e-13);
        assert!((zeta_minus_one(4.0) - (pi.powi(4) / 90.0 - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn two_step_closed_form_is_exact() {
        let n = 5000u64;
        for a1 in [10.0, 1234.5] {
            let spec = FamilySpec::TwoStep {
                w1: crate::population::family::StepWeight::Const(1.0),
                first: crate::population::family::Step::Width(Rate::Const(a1)),
                second: None,
            };
            let approx = integral_approximations(&spec, n).unwrap();
            let b1 = n as f64 / a1;
            assert_eq!(approx.ef1_approx, n as f64 * (-b1).exp());
            assert_eq!(approx.method, ApproximationMethod::ClosedForm);
        }
    }

    #[test]
    fn pareto_quadrature_matches_gamma_form() {
        for b in [1.5, 2.0, 3.0] {
            for n in [1_000u64, 1_000_000] {
                let approx = integral_approximations(&FamilySpec::pareto(b), n).unwrap();
                let closed = pareto_ef1_closed_form(n, b);
                // the closed form extends the t-integral from n c to infinity
                assert!(
                    (approx.ef1_approx / closed - 1.0).abs() < 5e-6,
                    "b={b} n={n}"
                );
            }
        }
    }

    #[test]
    fn exponential_quadrature_matches_closed_form() {
        // ∫ n C e^{-x/a} exp(-n C e^{-x/a}) dx = a (1 - e^{-nC})
        // ∫ ... (1 + t) ... = a (2 - (2 + nC) e^{-nC})
        for a in [10.0, 1000.0] {
            let n = 100_000u64;
            let c = (1.0f64 / a).exp_m1();
            let t0 = n as f64 * c;
            let approx =
                integral_approximations(&FamilySpec::exponential(Rate::Const(a)), n).unwrap();
            let ef1 = a * (1.0 - (-t0).exp());
            let s_sq = a * (2.0 - (2.0 + t0) * (-t0).exp());
            assert!((approx.ef1_approx / ef1 - 1.0).abs() < 2e-6);
            assert!((approx.s_sq_approx / s_sq - 1.0).abs() < 2e-6);
        }
    }

    #[test]
    fn explicit_is_unsupported() {
        let spec = FamilySpec::Explicit { weights: vec![1.0] };
        assert!(matches!(
            integral_approximations(&spec, 10),
            Err(Error::UnsupportedFamily(_))
        ));
    }
}
