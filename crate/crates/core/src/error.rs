use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("operation requires at least one point, got an empty distribution")]
    EmptyInput,

    #[error("need more than {k} points for k-distance with k = {k}, got {n}")]
    InsufficientPoints { n: usize, k: usize },

    #[error("curve of length {0} is too short for elbow detection (need at least 3)")]
    CurveTooShort(usize),

    #[error("curve is constant; no elbow exists")]
    DegenerateCurve,

    #[error("null distribution has zero spread; z statistic undefined")]
    DegenerateNull,

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

impl GazeError {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        GazeError::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = GazeError> = std::result::Result<T, E>;
