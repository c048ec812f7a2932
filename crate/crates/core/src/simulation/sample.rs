//! Multinomial and Poissonized occupancy draws and their statistics.
//!
//! Variates come from `rand_distr` 0.5: binomials use BINV inversion when
//! `n·min(p, 1-p) < 10` and BTPE rejection otherwise (Kachitvichyanukul and
//! Schmeiser 1988); Poissons use Knuth's multiplication method when the mean
//! is below 12 and Ahrens-Dieter rejection otherwise. Draws are reproducible
//! for a fixed seed, crate version and `rand_distr` version.

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::population::PopulationModel;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Per-species counts aligned with a model's atoms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub counts: Vec<u64>,
    /// Sample size: `n` for a multinomial draw, the realized `N_λ` for a Poissonized one.
    pub total: u64,
}

impl SampleOutcome {
    /// Builds an outcome whose total is the sum of `counts`.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    /// `F_j`: number of species seen exactly `j` times.
    pub fn occupancy(&self, j: u64) -> u64 {
        self.counts.iter().filter(|&&c| c == j).count() as u64
    }

    fn add(&mut self, other: &SampleOutcome) {
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total += other.total;
    }
}

fn binomial(trials: u64, p: f64, rng: &mut impl Rng) -> u64 {
    Binomial::new(trials, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

fn poisson(mean: f64, rng: &mut impl Rng) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let x: f64 = Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng);
    x as u64
}

/// Conditional-binomial multinomial sampler with precomputed suffix masses.
#[derive(Clone, Debug)]
pub struct MultinomialSampler<'a> {
    probs: &'a [f64],
    /// `suffix[i] = Σ_{k≥i} p_k`, accumulated from the smallest atom upwards.
    suffix: Vec<f64>,
}

impl<'a> MultinomialSampler<'a> {
    pub fn new(model: &'a PopulationModel) -> Self {
        let probs = model.probs();
        let mut suffix = vec![0.0; probs.len()];
        let mut acc = NeumaierSum::new();
        for (i, &p) in probs.iter().enumerate().rev() {
            acc.add(p);
            suffix[i] = acc.total();
        }
        Self { probs, suffix }
    }

    /// Draws `X ~ Multinomial(n, p)`. Returns the outcome and whether the
    /// remaining mass underflowed, in which case the leftover trials were
    /// placed on the current atom.
    pub fn draw(&self, n: u64, rng: &mut impl Rng) -> (SampleOutcome, bool) {
        let mut counts = vec![0u64; self.probs.len()];
        let mut remaining = n;
        let mut underflow = false;
        for (i, (&p, &mass)) in self.probs.iter().zip(&self.suffix).enumerate() {
            if remaining == 0 {
                break;
            }
            let q = if mass > 0.0 && mass.is_finite() {
                p / mass
            } else {
                underflow = true;
                1.0
            };
            let x = if i + 1 == self.probs.len() {
                remaining
            } else {
                binomial(remaining, q, rng)
            };
            counts[i] = x;
            remaining -= x;
        }
        (SampleOutcome { counts, total: n }, underflow)
    }
}

/// One multinomial `(n, p)` draw by the conditional-binomial chain.
pub fn draw_multinomial(
    model: &PopulationModel,
    n: u64,
    rng: &mut impl Rng,
) -> Result<SampleOutcome> {
    if model.is_empty() {
        return Err(Error::InvalidParameter("model has no atoms".into()));
    }
    Ok(MultinomialSampler::new(model).draw(n, rng).0)
}

/// Independent `X_i ~ Poisson(λ p_i)`; `total` is their sum.
pub fn draw_poissonized(
    model: &PopulationModel,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<SampleOutcome> {
    check_lambda(lambda)?;
    let counts = model
        .probs()
        .iter()
        .map(|&p| poisson(lambda * p, rng))
        .collect();
    Ok(SampleOutcome::from_counts(counts))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// `X(n)` and `X(N_n)` on one probability space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub multinomial: SampleOutcome,
    pub poissonized: SampleOutcome,
    /// Set when a multinomial chain hit remaining-mass underflow.
    pub underflow: bool,
}

pub(crate) fn coupled_with(
    sampler: &MultinomialSampler<'_>,
    n: u64,
    rng: &mut impl Rng,
) -> CoupledPair {
    let big_n = poisson(n as f64, rng);
    let (mut base, u1) = sampler.draw(n.min(big_n), rng);
    let (increment, u2) = sampler.draw(n.abs_diff(big_n), rng);
    let smaller = base.clone();
    base.add(&increment);
    let (multinomial, poissonized) = if big_n >= n {
        (smaller, base)
    } else {
        (base, smaller)
    };
    CoupledPair {
        multinomial,
        poissonized,
        underflow: u1 || u2,
    }
}

/// Draws `N_n ~ Poisson(n)`, a multinomial at `min(n, N_n)` and an
/// independent multinomial increment of size `|N_n - n|` added to the larger member.
pub fn coupled_pair(model: &PopulationModel, n: u64, rng: &mut impl Rng) -> Result<CoupledPair> {
    if n == 0 {
        return Err(Error::ZeroSampleSize);
    }
    if model.is_empty() {
        return Err(Error::InvalidParameter("model has no atoms".into()));
    }
    Ok(coupled_with(&MultinomialSampler::new(model), n, rng))
}

fn check_alignment(model: &PopulationModel, outcome: &SampleOutcome) -> Result<()> {
    if model.len() != outcome.counts.len() {
        return Err(Error::AlignmentMismatch {
            expected: model.len(),
            found: outcome.counts.len(),
        });
    }
    Ok(())
}

/// `Σ_i p_i 1{X_i = 0}` over the kept atoms. Mass discarded by truncation
/// is never sampled and is not included; it is bounded by the model's
/// `tail_mass_bound`.
pub fn true_missing_mass(model: &PopulationModel, outcome: &SampleOutcome) -> Result<f64> {
    check_alignment(model, outcome)?;
    Ok(unseen_mass(model.probs(), &outcome.counts))
}

fn unseen_mass(probs: &[f64], counts: &[u64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for (&p, &c) in probs.iter().zip(counts) {
        if c == 0 {
            acc.add(p);
        }
    }
    acc.total()
}

/// `ξ_n = Σ_i (1{X_i = 1} - n p_i 1{X_i = 0})`, with `n = outcome.total`.
/// Evaluated as `F_1 - n Q_n`, so it equals `n (Q̂_n - Q_n)` up to rounding.
pub fn xi_statistic(model: &PopulationModel, outcome: &SampleOutcome) -> Result<f64> {
    check_alignment(model, outcome)?;
    Ok(centered(outcome, outcome.total as f64, model.probs()))
}

/// `ζ_λ = Σ_i (1{X_i = 1} - λ p_i 1{X_i = 0})`.
pub fn zeta_statistic(
    model: &PopulationModel,
    lambda: f64,
    outcome: &SampleOutcome,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_alignment(model, outcome)?;
    Ok(centered(outcome, lambda, model.probs()))
}

fn centered(outcome: &SampleOutcome, scale: f64, probs: &[f64]) -> f64 {
    outcome.occupancy(1) as f64 - scale * unseen_mass(probs, &outcome.counts)
}
