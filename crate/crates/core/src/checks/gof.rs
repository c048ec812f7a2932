//! Goodness-of-fit statistics against the normal and Poisson reference laws.

use crate::error::{Error, Result};
use crate::numeric::{normal_cdf, normal_quantile};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Reference {
    StandardNormal,
    Poisson { mean: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    /// KS distance for the normal reference, total variation for Poisson. Always in `[0, 1]`.
    pub statistic: f64,
    pub sample_size: usize,
    pub reference: Reference,
    /// Asymptotic Kolmogorov p-value; absent for total variation.
    pub p_value: Option<f64>,
}

fn check_finite(samples: &[f64], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::InvalidSamples(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidSamples(format!("non-finite sample {x}")));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    xs
}

/// `P(K > x)` for the Kolmogorov limit law `K = sup |B(t)|`.
///
/// Uses `2 Σ_{k≥1} (-1)^{k-1} e^{-2k²x²}` for `x ≥ 1` and the Jacobi-dual form
/// `1 - (√(2π)/x) Σ_{k≥1} e^{-(2k-1)²π²/(8x²)}` below, each summed until the
/// terms drop under `1e-16` (at most 100 terms).
pub fn kolmogorov_survival(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let mut acc = 0.0;
    if x >= 1.0 {
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            acc += if k % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        (2.0 * acc).clamp(0.0, 1.0)
    } else {
        let pi = std::f64::consts::PI;
        for k in 1..=100 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi * pi / (8.0 * x * x)).exp();
            acc += term;
            if term < 1e-16 {
                break;
            }
        }
        (1.0 - (2.0 * pi).sqrt() / x * acc).clamp(0.0, 1.0)
    }
}

/// Two-sided KS distance between the empirical CDF and `Φ`, with an asymptotic p-value.
pub fn ks_normal(samples: &[f64]) -> Result<GofResult> {
    check_finite(samples, 2)?;
    let xs = sorted(samples);
    let m = xs.len() as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            let i = i as f64;
            ((i + 1.0) / m - f).max(f - i / m)
        })
        .fold(0.0, f64::max);
    Ok(GofResult {
        statistic,
        sample_size: xs.len(),
        reference: Reference::StandardNormal,
        p_value: Some(kolmogorov_survival(m.sqrt() * statistic)),
    })
}

fn poisson_pmf(k: u64, mean: f64) -> f64 {
    let kf = k as f64;
    (kf * mean.ln() - mean - ln_gamma(kf + 1.0)).exp()
}

/// Total variation between the empirical pmf of `samples` and `Poisson(mean)`.
///
/// The sum runs over `k = 0..=K`, where `K` covers every sample and the first
/// `k ≥ mean` with Poisson mass below `1e-12`.
pub fn poisson_gof(samples: &[u64], mean: f64) -> Result<GofResult> {
    if samples.len() < 100 {
        return Err(Error::InvalidSamples(format!(
            "need at least 100 samples, got {}",
            samples.len()
        )));
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "poisson mean must be positive, got {mean}"
        )));
    }
    let mut cutoff = mean.floor() as u64;
    while poisson_pmf(cutoff, mean) >= 1e-12 {
        cutoff += 1;
    }
    let top = cutoff.max(*samples.iter().max().expect("nonempty"));
    let mut hist = vec![0u64; top as usize + 1];
    for &s in samples {
        hist[s as usize] += 1;
    }
    let m = samples.len() as f64;
    let l1: f64 = hist
        .iter()
        .enumerate()
        .map(|(k, &c)| (c as f64 / m - poisson_pmf(k as u64, mean)).abs())
        .sum();
    Ok(GofResult {
        statistic: (0.5 * l1).min(1.0),
        sample_size: samples.len(),
        reference: Reference::Poisson { mean },
        p_value: None,
    })
}

/// Pairs `(Φ^{-1}((i - ½)/m), x_(i))` in ascending order.
pub fn qq_points(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_finite(samples, 1)?;
    let xs = sorted(samples);
    let m = xs.len() as f64;
    Ok(xs
        .into_iter()
        .enumerate()
        .map(|(i, x)| (normal_quantile((i as f64 + 0.5) / m), x))
        .collect())
}

/// Largest `|x_(i) - Φ^{-1}((i - ½)/m)|` over the central `fraction` of the QQ points.
pub fn qq_max_deviation(points: &[(f64, f64)], fraction: f64) -> f64 {
    let m = points.len();
    let drop = ((1.0 - fraction.clamp(0.0, 1.0)) * m as f64 / 2.0).floor() as usize;
    points[drop..m - drop]
        .iter()
        .map(|(q, x)| (x - q).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Upper edges (inclusive) of the pooled cells; the last cell is open.
    pub cell_edges: Vec<u64>,
}

/// Two-sample χ² homogeneity test on integer-valued samples.
///
/// Adjacent values are pooled from the bottom until every cell has expected
/// count at least 5 in both samples; an undersized last cell merges into its
/// neighbour.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidSamples(
            "both samples must be nonempty".into(),
        ));
    }
    let top = *a.iter().chain(b).max().expect("nonempty") as usize;
    let mut ha = vec![0u64; top + 1];
    let mut hb = vec![0u64; top + 1];
    a.iter().for_each(|&x| ha[x as usize] += 1);
    b.iter().for_each(|&x| hb[x as usize] += 1);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let share = na.min(nb) / (na + nb);

    let mut cells: Vec<(u64, u64, u64)> = Vec::new();
    let (mut ca, mut cb) = (0u64, 0u64);
    for v in 0..=top {
        ca += ha[v];
        cb += hb[v];
        if (ca + cb) as f64 * share >= 5.0 {
            cells.push((v as u64, ca, cb));
            ca = 0;
            cb = 0;
        }
    }
    if ca + cb > 0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 = top as u64;
                last.1 += ca;
                last.2 += cb;
            }
            None => cells.push((top as u64, ca, cb)),
        }
    }
    if cells.len() < 2 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            degrees_of_freedom: 0,
            p_value: 1.0,
            cell_edges: cells.iter().map(|c| c.0).collect(),
        });
    }
    let total = na + nb;
    let statistic: f64 = cells
        .iter()
        .map(|&(_, ca, cb)| {
            let pooled = (ca + cb) as f64;
            let ea = pooled * na / total;
            let eb = pooled * nb / total;
            (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb
        })
        .sum();
    let dof = cells.len() - 1;
    Ok(ChiSquareResult {
        statistic,
        degrees_of_freedom: dof,
        p_value: if statistic > 0.0 {
            gamma_ur(dof as f64 / 2.0, statistic / 2.0)
        } else {
            1.0
        },
        cell_edges: cells.iter().map(|c| c.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quantile_grid(m: usize, shift: f64) -> Vec<f64> {
        (0..m)
            .map(|i| normal_quantile((i as f64 + 0.5) / m as f64) + shift)
            .collect()
    }

    #[test]
    fn ks_on_quantile_grid() {
        let r = ks_normal(&quantile_grid(1000, 0.0)).unwrap();
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value.unwrap() > 0.999);
    }

    #[test]
    fn ks_detects_shift() {
        // sup |Φ(x) - Φ(x - 1)| = Φ(½) - Φ(-½) = 0.38292492254802624
        let r = ks_normal(&quantile_grid(1000, 1.0)).unwrap();
        assert!(
            (r.statistic - 0.382_924_922_548_026_2).abs() < 1e-3,
            "{}",
            r.statistic
        );
        assert!(r.statistic >= 0.34);
        assert!(r.p_value.unwrap() < 1e-50);
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(ks_normal(&[1.0]).is_err());
        assert!(ks_normal(&[0.0, f64::NAN]).is_err());
        assert!(ks_normal(&[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn kolmogorov_reference_values() {
        // scipy.special.kolmogorov
        let cases = [
            (0.3, 0.999_990_694_198_665_5),
            (0.5, 0.963_945_243_664_875_1),
            (1.0, 0.269_999_671_677_354_56),
            (1.36, 0.049_485_876_755_377_876),
            (2.0, 0.000_670_925_255_779_695_3),
        ];
        for (x, want) in cases {
            assert!((kolmogorov_survival(x) - want).abs() < 1e-12, "x = {x}");
        }
        // both series agree where they meet
        let lo = {
            let pi = std::f64::consts::PI;
            let x: f64 = 1.0;
            1.0 - (2.0 * pi).sqrt() / x
                * (1..50)
                    .map(|k| (-((2 * k - 1) as f64).powi(2) * pi * pi / 8.0).exp())
                    .sum::<f64>()
        };
        assert!((lo - kolmogorov_survival(1.0)).abs() < 1e-14);
    }

    #[test]
    fn poisson_tv_cases() {
        let zeros = vec![0u64; 200];
        let r = poisson_gof(&zeros, 1.0).unwrap();
        assert!((r.statistic - (1.0 - (-1.0f64).exp())).abs() < 1e-9);

        // pmf proportions of Poisson(1) at m = 10^6
        let m = 1_000_000usize;
        let mut samples = Vec::with_capacity(m);
        for k in 0..20u64 {
            let c = (poisson_pmf(k, 1.0) * m as f64).round() as usize;
            samples.extend(std::iter::repeat_n(k, c));
        }
        let r = poisson_gof(&samples, 1.0).unwrap();
        assert!(r.statistic < 0.001);
        assert!(poisson_gof(&zeros[..50], 1.0).is_err());
    }

    #[test]
    fn qq_cases() {
        assert_eq!(qq_points(&[3.0]).unwrap(), vec![(0.0, 3.0)]);
        let grid = quantile_grid(101, 0.0);
        let pts = qq_points(&grid).unwrap();
        assert!(pts.iter().all(|(q, x)| (q - x).abs() < 1e-12));
        assert!(qq_max_deviation(&pts, 0.9) < 1e-12);
    }

    #[test]
    fn chi_square_same_vs_shifted() {
        let a: Vec<u64> = (0..2002).map(|i| i % 7).collect();
        let b: Vec<u64> = (0..2002).map(|i| (i * 3) % 7).collect();
        let r = chi_square_two_sample(&a, &b).unwrap();
        assert!(r.statistic < 1e-9 && r.p_value > 0.99);
        let c: Vec<u64> = a.iter().map(|x| x + 1).collect();
        assert!(chi_square_two_sample(&a, &c).unwrap().p_value < 1e-10);
    }

    #[test]
    fn chi_square_reference_value() {
        // scipy.stats.chi2_contingency([[10, 20, 30], [20, 20, 20]], correction=False)
        let mut a = vec![0u64; 10];
        a.extend([1; 20]);
        a.extend([2; 30]);
        let mut b = vec![0u64; 20];
        b.extend([1; 20]);
        b.extend([2; 20]);
        let r = chi_square_two_sample(&a, &b).unwrap();
        assert_eq!(r.degrees_of_freedom, 2);
        assert!((r.statistic - 5.333_333_333_333_334).abs() < 1e-12);
        assert!((r.p_value - 0.069_483_451_222_801_5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ks_is_permutation_invariant(mut xs in prop::collection::vec(-5.0f64..5.0, 2..200), seed in any::<u64>()) {
            let r1 = ks_normal(&xs).unwrap();
            let k = (seed as usize) % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            let r2 = ks_normal(&xs).unwrap();
            prop_assert_eq!(r1.statistic, r2.statistic);
            prop_assert!((0.0..=1.0).contains(&r1.statistic));
        }

        #[test]
        fn tv_in_unit_interval(xs in prop::collection::vec(0u64..40, 100..300), mean in 0.1f64..30.0) {
            let r = poisson_gof(&xs, mean).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.statistic));
        }
    }
}
