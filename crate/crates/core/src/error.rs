use std::path::PathBuf;

/// Errors produced by the simulator and its analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("point (a={a}, v={v}) lies outside the isoperimetric region (relative violation {violation:e})")]
    OutsideRegion { a: f64, v: f64, violation: f64 },

    #[error("value out of supported range: {0}")]
    Range(String),

    #[error("ODE step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("split step too large: expected {expected:.3} merges for {n} particles")]
    StepTooLarge { expected: f64, n: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("wrong frame: {0}")]
    WrongFrame(String),

    #[error("missing column {0}")]
    MissingColumn(String),

    #[error("bin grids differ")]
    GridMismatch,

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("malformed data in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and positive, got {x}")))
    }
}
