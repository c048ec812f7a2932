// Negated float comparisons are deliberate: NaN must fail every positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod io;
pub mod numeric;
pub mod population;
pub mod simulation;

pub use error::{Error, Result};

/// Crate version, embedded in every serialized artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
