use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input is rational: its continued fraction terminates after {terms} terms")]
    RationalInput { terms: usize },

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("invalid digit {digit} at position {position}: digits must be >= 1")]
    InvalidDigit { position: usize, digit: i64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("level {level} out of range (tower depth {depth})")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("degenerate basis at level {level}, sublevel {sublevel}: vector {index} is linearly dependent")]
    DegenerateBasis {
        level: usize,
        sublevel: usize,
        index: usize,
    },

    #[error("power iteration did not converge after {iterations} iterations (last relative change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("digit agreement depth {agreement} is below the tail cutoff {cutoff}")]
    AgreementTooShallow { agreement: usize, cutoff: usize },

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("overflow: {0}")]
    Overflow(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
