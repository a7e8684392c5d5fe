//! Crate-wide error type. Variants carry enough context to name the
//! offending code, admission or file without a debugger.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A source string could not be parsed as a code of the claimed system.
    #[error("cannot parse {system} code {code:?}: {reason}")]
    CodeParse {
        system: &'static str,
        code: String,
        reason: String,
    },

    /// A crosswalk lookup missed; the source code is preserved for logging.
    #[error("no {target} mapping for code {code:?}")]
    MappingMiss { target: &'static str, code: String },

    /// Input data violates an integrity rule (interval order, dangling ids).
    #[error("data integrity: {0}")]
    Integrity(String),

    /// A tensor picked up a NaN or infinity.
    #[error("numerical integrity: {0}")]
    Numerics(String),

    /// Configuration is missing, malformed or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// A checkpoint or store was produced under a different configuration.
    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    /// Malformed binary or text artifact.
    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable category label, used for structured CLI exits.
    pub fn category(&self) -> &'static str {
        match self {
            Error::CodeParse { .. } => "code-parse",
            Error::MappingMiss { .. } => "mapping-miss",
            Error::Integrity(_) => "data-integrity",
            Error::Numerics(_) => "numerics",
            Error::Config(_) => "config",
            Error::FingerprintMismatch { .. } => "fingerprint",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code for the category; 0 is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::FingerprintMismatch { .. } => 2,
            Error::CodeParse { .. } | Error::MappingMiss { .. } => 3,
            Error::Integrity(_) | Error::Format(_) => 4,
            Error::Numerics(_) => 5,
            Error::Io(_) | Error::Csv(_) => 6,
        }
    }
}
