use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration input.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite sample at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// A trajectory came closer to a source than the allowed standoff.
    #[error("proximity error at t = {t} s: distance {distance} m is inside the exclusion radius {limit} m")]
    Proximity { t: f64, distance: f64, limit: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no convergence ({context}): last estimates {previous} and {last}")]
    Convergence {
        context: String,
        previous: f64,
        last: f64,
    },

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("rank error: {0}")]
    Rank(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::Accuracy(_) => 3,
            Error::InternalConsistency(_) => 4,
            _ => 2,
        }
    }
}
