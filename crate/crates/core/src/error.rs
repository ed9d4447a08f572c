use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("integration diverged at step {step} (t = {time:.6e} s)")]
    IntegrationDiverged { step: u64, time: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("bandwidth unidentifiable: {0}")]
    BandwidthUnidentifiable(String),

    #[error("zero signal amplitude")]
    ZeroSignal,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("scan does not bracket the resonance: {0}")]
    ScanNotBracketing(String),

    #[error("tone not resolved: {0}")]
    ToneNotResolved(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
