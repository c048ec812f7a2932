//! Seeded Monte Carlo draws of occupancy samples and replicate batches.

mod batch;
mod rng;
mod sample;

pub use batch::{
    control_poissonized_f1, expected_moments, run_replicates, ExpectedMoments, ReplicateBatch,
    ReplicateRecord, SimulationConfig,
};
pub use rng::{expand_seed, splitmix64, substream};
pub use sample::{
    coupled_pair, draw_multinomial, draw_poissonized, true_missing_mass, xi_statistic,
    zeta_statistic, CoupledPair, MultinomialSampler, SampleOutcome,
};
