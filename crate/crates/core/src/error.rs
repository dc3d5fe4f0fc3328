use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("denominator volume is zero")]
    EmptyDenominator,

    #[error("operation requires labels but the volume has none")]
    LabelsRequired,

    #[error("at least {required} pixels required, got {got}")]
    TooFewPixels { required: usize, got: usize },

    #[error("invalid confidence budget: {0}")]
    BadConfidenceBudget(String),

    #[error("profile mismatch: {0}")]
    ProfileMismatch(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt volume: {0}")]
    CorruptVolume(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
