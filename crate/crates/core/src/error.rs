use thiserror::Error;

/// Errors produced by the modem, channel and detector layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("guard too small: {guard} null symbols, at least {required} required")]
    GuardTooSmall { guard: usize, required: usize },

    #[error("Doppler mode mismatch: {0}")]
    Mode(String),

    #[error("degenerate channel: data column {0} carries no energy")]
    DegenerateColumn(usize),

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular system")]
    Singular,

    #[error("exhaustive search over {bits} bits exceeds the {budget}-bit budget")]
    SearchBudget { bits: usize, budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
