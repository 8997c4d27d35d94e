use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unstable filter section {section}: poles on or outside the unit circle")]
    UnstableFilter { section: usize },

    #[error("adaptive filter diverged at sample {sample}")]
    Divergence { sample: u64 },

    #[error("stream alignment error: {0}")]
    Alignment(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate analysis window: {0}")]
    DegenerateWindow(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
