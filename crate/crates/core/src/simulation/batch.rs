//! Seeded replicate batches.
//!
//! A batch is a pure function of its [`SimulationConfig`]: replicate `i`
//! draws from [`substream`]`(seed, i)` only, and records are assembled in
//! index order whatever the thread schedule.

use super::rng::substream;
use super::sample::{
    coupled_with, draw_poissonized, true_missing_mass, xi_statistic, zeta_statistic,
    MultinomialSampler,
};
use crate::error::{Error, Result};
use crate::estimator::{wald_variance, z_statistic, VarianceMode};
use crate::population::{
    build_model, expected_fj, s_squared, FamilySpec, PopulationModel, TruncationPolicy,
};
use crate::VERSION;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub family: FamilySpec,
    pub n: u64,
    pub replicates: usize,
    pub seed: u64,
    /// Also draw the Poissonized member `X(N_n)` of the coupling, with `λ = n`.
    pub coupled: bool,
    pub truncation: TruncationPolicy,
}

impl SimulationConfig {
    pub fn new(family: FamilySpec, n: u64, replicates: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            replicates,
            seed,
            coupled: false,
            truncation: TruncationPolicy::default(),
        }
    }

    pub fn coupled(mut self, coupled: bool) -> Self {
        self.coupled = coupled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be positive".to_string());
        }
        if self.replicates == 0 {
            problems.push("replicates must be at least 1".to_string());
        }
        if let Err(e) = self.family.validate() {
            problems.push(e.to_string());
        }
        if let Some(tol) = self.truncation.tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                problems.push(format!("truncation tolerance must be positive, got {tol}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Exact moments of the model, computed once per batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMoments {
    pub ef1: f64,
    pub ef2: f64,
    pub s_sq: f64,
    /// `E F_1 (1 - E F_1/n) + 2 E F_2`.
    pub denom_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    /// Missing mass over the kept atoms.
    pub q_true: f64,
    pub q_hat: f64,
    pub f1: u64,
    pub f2: u64,
    pub xi: f64,
    /// `n (Q̂ - Q)` over the expected denominator.
    pub z_expected: f64,
    /// `n (Q̂ - Q)` over the replicate's own `F_1 (1 - F_1/n) + 2 F_2`; `None` when that is zero.
    pub z_empirical: Option<f64>,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poisson_total: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poisson_f1: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateBatch {
    pub version: String,
    pub seed: u64,
    pub config: SimulationConfig,
    /// Poisson intensity of the coupled member, when drawn.
    pub lambda: Option<f64>,
    pub kept_atoms: usize,
    /// Bound on the mass never sampled; `q_true` excludes it.
    pub tail_mass_bound: f64,
    pub expected: ExpectedMoments,
    pub degenerate_count: usize,
    pub warnings: Vec<String>,
    pub records: Vec<ReplicateRecord>,
}

impl ReplicateBatch {
    pub fn z_expected(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.z_expected).collect()
    }
}

pub fn expected_moments(model: &PopulationModel, n: u64) -> Result<ExpectedMoments> {
    let ef1 = expected_fj(model, n, 1)?;
    let ef2 = if n >= 2 {
        expected_fj(model, n, 2)?
    } else {
        0.0
    };
    let nf = n as f64;
    Ok(ExpectedMoments {
        ef1,
        ef2,
        s_sq: s_squared(model, nf),
        denom_sq: ef1 * (1.0 - ef1 / nf) + 2.0 * ef2,
    })
}

fn one_replicate(
    model: &PopulationModel,
    sampler: &MultinomialSampler<'_>,
    config: &SimulationConfig,
    moments: &ExpectedMoments,
    index: usize,
) -> Result<(ReplicateRecord, bool)> {
    let n = config.n;
    let mut rng = substream(config.seed, index as u64);
    let (sample, poissonized, underflow) = if config.coupled {
        let pair = coupled_with(sampler, n, &mut rng);
        (pair.multinomial, Some(pair.poissonized), pair.underflow)
    } else {
        let (s, u) = sampler.draw(n, &mut rng);
        (s, None, u)
    };
    let f1 = sample.occupancy(1);
    let f2 = sample.occupancy(2);
    let q_true = true_missing_mass(model, &sample)?;
    let q_hat = f1 as f64 / n as f64;
    let z_expected = z_statistic(q_hat, q_true, n, moments.denom_sq)?;
    let empirical = wald_variance(f1, f2, n, VarianceMode::Esty);
    let z_empirical = (empirical > 0.0)
        .then(|| z_statistic(q_hat, q_true, n, empirical))
        .transpose()?;
    let zeta = poissonized
        .as_ref()
        .map(|p| zeta_statistic(model, n as f64, p))
        .transpose()?;
    let record = ReplicateRecord {
        index,
        q_true,
        q_hat,
        f1,
        f2,
        xi: xi_statistic(model, &sample)?,
        z_expected,
        degenerate: z_empirical.is_none(),
        z_empirical,
        zeta,
        poisson_total: poissonized.as_ref().map(|p| p.total),
        poisson_f1: poissonized.as_ref().map(|p| p.occupancy(1)),
    };
    Ok((record, underflow))
}

/// Builds the model once and runs `config.replicates` independent replicates in parallel.
pub fn run_replicates(config: &SimulationConfig) -> Result<ReplicateBatch> {
    config.validate()?;
    let model = build_model(&config.family, config.n, config.truncation)?;
    let moments = expected_moments(&model, config.n)?;
    if !(moments.denom_sq > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    let sampler = MultinomialSampler::new(&model);
    let results = (0..config.replicates)
        .into_par_iter()
        .map(|i| one_replicate(&model, &sampler, config, &moments, i))
        .collect::<Result<Vec<_>>>()?;
    let underflows = results.iter().filter(|(_, u)| *u).count();
    let records: Vec<ReplicateRecord> = results.into_iter().map(|(r, _)| r).collect();
    let degenerate_count = records.iter().filter(|r| r.degenerate).count();

    let mut warnings = Vec::new();
    if underflows > 0 {
        warnings.push(format!(
            "{underflows} replicates hit remaining-mass underflow in the multinomial chain"
        ));
    }
    if degenerate_count > 0 {
        warnings.push(format!(
            "{degenerate_count} replicates have a zero empirical denominator; z_empirical is null for them"
        ));
    }
    let tail = model.truncation().tail_mass_bound;
    if tail > 0.0 {
        warnings.push(format!(
            "q_true excludes truncated tail mass of at most {tail:e}"
        ));
    }
    Ok(ReplicateBatch {
        version: VERSION.to_string(),
        seed: config.seed,
        config: config.clone(),
        lambda: config.coupled.then_some(config.n as f64),
        kept_atoms: model.len(),
        tail_mass_bound: tail,
        expected: moments,
        degenerate_count,
        warnings,
        records,
    })
}

/// Stream indices with the top bit set never collide with replicate streams.
const CONTROL_STREAM: u64 = 1 << 63;

/// `F_1` of `count` independent Poissonized draws at `λ = n`, read from
/// control streams of the batch seed. Used to test the coupled member's marginal law.
pub fn control_poissonized_f1(config: &SimulationConfig, count: usize) -> Result<Vec<u64>> {
    config.validate()?;
    let model = build_model(&config.family, config.n, config.truncation)?;
    let lambda = config.n as f64;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, CONTROL_STREAM | i);
            Ok(draw_poissonized(&model, lambda, &mut rng)?.occupancy(1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_are_deterministic() {
        let cfg = SimulationConfig::new(FamilySpec::pareto(2.0), 5000, 64, 42).coupled(true);
        let a = run_replicates(&cfg).unwrap();
        let b = run_replicates(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_replicates(&SimulationConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn records_do_not_depend_on_batch_size() {
        let small =
            run_replicates(&SimulationConfig::new(FamilySpec::uniform(50), 200, 5, 1)).unwrap();
        let large =
            run_replicates(&SimulationConfig::new(FamilySpec::uniform(50), 200, 20, 1)).unwrap();
        assert_eq!(small.records[..], large.records[..5]);
    }

    #[test]
    fn records_satisfy_identities() {
        let cfg = SimulationConfig::new(FamilySpec::pareto(3.0), 20_000, 50, 7).coupled(true);
        let batch = run_replicates(&cfg).unwrap();
        let n = cfg.n as f64;
        for r in &batch.records {
            let want = n * (r.q_hat - r.q_true);
            assert!((r.xi - want).abs() <= 1e-9 * want.abs().max(1.0));
            assert!(r.zeta.is_some() && r.poisson_total.is_some());
            assert_eq!(r.z_empirical.is_none(), r.degenerate);
        }
        assert_eq!(batch.lambda, Some(n));
    }

    #[test]
    fn control_draws_are_deterministic() {
        let cfg = SimulationConfig::new(FamilySpec::uniform(40), 60, 10, 4);
        let a = control_poissonized_f1(&cfg, 30).unwrap();
        assert_eq!(a, control_poissonized_f1(&cfg, 30).unwrap());
        assert_eq!(a[..10], control_poissonized_f1(&cfg, 10).unwrap()[..]);
    }

    #[test]
    fn degenerate_replicates_are_flagged() {
        // the split (1, 1) gives F_1 = n and F_2 = 0
        let cfg = SimulationConfig::new(FamilySpec::uniform(2), 2, 200, 3);
        let batch = run_replicates(&cfg).unwrap();
        assert!(batch.degenerate_count > 0);
        assert!(batch
            .records
            .iter()
            .filter(|r| r.degenerate)
            .all(|r| r.z_empirical.is_none()));
    }

    #[test]
    fn invalid_config_is_aggregated() {
        let cfg = SimulationConfig::new(FamilySpec::pareto(0.5), 0, 0, 1);
        match run_replicates(&cfg) {
            Err(Error::Config(problems)) => assert_eq!(problems.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
