use thiserror::Error;

/// Errors raised by the simulator, the gradient machinery and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("validation failed at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("tangential crossing at t = {t}: guard drift {guard_drift:e} below transversality floor {floor:e}")]
    TangentialCrossing {
        t: f64,
        guard_drift: f64,
        floor: f64,
    },

    #[error("runaway chatter: more than {max_events} events before t = {t} (threshold gap too small relative to noise?)")]
    RunawayChatter { max_events: usize, t: f64 },

    #[error("invariant breach: {0}")]
    Logic(String),

    #[error("path covers [0, {covered}] but the cost horizon is {horizon}")]
    ShortPath { covered: f64, horizon: f64 },

    #[error("sample path carries no IPA annotation for {0}")]
    MissingIpa(String),

    #[error("gradient estimation aborted: {failures} failed paths exceeded the retry budget of {budget}; last error: {last}")]
    RetryBudgetExceeded {
        failures: usize,
        budget: usize,
        last: String,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
