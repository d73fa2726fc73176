use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the crate.
///
/// Numerical invariant violations (negative divergences, non-finite values,
/// failed brackets) are separate variants from configuration mistakes so that
/// callers can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown loss '{0}'")]
    UnknownLoss(String),

    #[error("invalid parameter `{name}` for loss '{loss}': {reason}")]
    InvalidParameter {
        loss: String,
        name: String,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "loss '{loss}' is not gradient-symmetric (gradient-sum spread {spread:.3e}); \
         {operation} requires a constant gradient sum"
    )]
    NotGradientSymmetric {
        loss: String,
        operation: &'static str,
        spread: f64,
    },

    #[error("loss '{loss}' has no linear odd part; the linear-odd decomposition does not apply")]
    NoLinearOddPart { loss: String },

    #[error("{context}: non-finite value for input {input}")]
    NonFinite { context: String, input: f64 },

    #[error("{context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("link domain: {0}")]
    LinkDomain(String),

    #[error("Bregman divergence negative beyond rounding: B({u}, {v}) = {value:.6e}")]
    NegativeDivergence { u: f64, v: f64, value: f64 },

    #[error(
        "anchor truncation did not converge by G = {level:.3e}: \
         last value {last_value}, last delta {last_delta:.3e}"
    )]
    TruncationNotConverged {
        level: f64,
        last_value: f64,
        last_delta: f64,
    },

    #[error("bootstrap resample still single-class after {attempts} redraws")]
    DegenerateResample { attempts: usize },

    #[error("training diverged at iteration {iteration}: {detail}")]
    TrainingDiverged { iteration: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
