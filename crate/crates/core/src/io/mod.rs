//! Input parsing and deterministic serialization.

pub mod counts;
pub mod format;

pub use counts::{example4_profile, parse_counts, parse_counts_file, EXAMPLE4_PROFILE};
pub use format::{fmt_f64, to_json};
