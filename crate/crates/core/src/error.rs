use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain [{lo:?}, {hi:?}]")]
    Domain {
        point: [f64; 3],
        lo: [f64; 3],
        hi: [f64; 3],
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("metric is not positive definite at {point:?} (leading minors {minors:?})")]
    NotPositiveDefinite { point: [f64; 3], minors: [f64; 3] },

    #[error("singular metric at {point:?}: determinant {det:e}")]
    Singular { point: [f64; 3], det: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("deformation too large: positivity fails at s = {s:e}; max admissible s = {max_admissible_s:e}")]
    DeformationTooLarge { s: f64, max_admissible_s: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
