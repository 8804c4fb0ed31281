use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("preprocessing error: {0}")]
    Preprocess(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data for {what}: need {needed}, have {available}")]
    InsufficientData {
        what: String,
        needed: usize,
        available: usize,
    },

    #[error("shadow attack skipped: pool of {available} samples, need at least {needed}")]
    ShadowSkipped { needed: usize, available: usize },

    #[error("feature width mismatch: model expects {expected}, sample has {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("clipped gradient norm {norm} exceeds clip bound {bound}")]
    ClipViolation { norm: f64, bound: f64 },

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
