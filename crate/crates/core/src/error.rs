use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("acausal delay: {0} ps (read before write)")]
    AcausalDelay(f64),

    #[error("no clicks: both click probabilities vanish")]
    NoClicks,

    #[error("singular generating-function determinant ({0:e})")]
    SingularDeterminant(f64),

    #[error("post-selected probability is zero")]
    ZeroPostSelection,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("Fock truncation tolerance unmet: tail {tail:e} at n_max = {n_max}")]
    Truncation { n_max: usize, tail: f64 },

    #[error("tag stream error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations: {context}")]
    NonConvergence {
        iterations: usize,
        context: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
