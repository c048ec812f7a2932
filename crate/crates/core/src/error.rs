use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no observations")]
    NoObservations,

    #[error("invalid frequency profile: {0}")]
    InvalidProfile(String),

    #[error("sample size must be positive")]
    ZeroSampleSize,

    #[error("degenerate denominator")]
    DegenerateDenominator,

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation requires {required} atoms, above the cap of {cap}")]
    AtomCapExceeded { required: u64, cap: usize },

    #[error("occupancy level j = {j} exceeds sample size n = {n}")]
    OccupancyOutOfRange { j: u64, n: u64 },

    #[error("degenerate model: s_n^2 = 0")]
    DegenerateModel,

    #[error("unsupported family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("outcome has {found} species, model has {expected}")]
    AlignmentMismatch { expected: usize, found: usize },

    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    #[error(
        "{degenerate} of {total} replicates have a degenerate empirical denominator (limit 10%)"
    )]
    TooManyDegenerate { degenerate: usize, total: usize },

    #[error("replicate {0} has no true missing mass")]
    MissingTrueValue(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoObservations => "no_observations",
            Error::InvalidProfile(_) => "invalid_profile",
            Error::ZeroSampleSize => "zero_sample_size",
            Error::DegenerateDenominator => "degenerate_denominator",
            Error::InvalidLevel(_) => "invalid_level",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::AtomCapExceeded { .. } => "atom_cap_exceeded",
            Error::OccupancyOutOfRange { .. } => "occupancy_out_of_range",
            Error::DegenerateModel => "degenerate_model",
            Error::UnsupportedFamily(_) => "unsupported_family",
            Error::AlignmentMismatch { .. } => "alignment_mismatch",
            Error::InvalidSamples(_) => "invalid_samples",
            Error::TooManyDegenerate { .. } => "too_many_degenerate",
            Error::MissingTrueValue(_) => "missing_true_value",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
