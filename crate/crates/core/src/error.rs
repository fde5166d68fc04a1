use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value failed validation. `field` is the dotted path of
    /// the offending field as it appears in the JSON config.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("step index {index} outside 1..={max}")]
    StepOutOfRange { index: usize, max: usize },

    #[error("counter is full: capacity of {capacity} episodes reached")]
    CounterOverflow { capacity: usize },

    #[error("counter query for episode {requested} but {fed} episodes have been fed")]
    CounterQuery { requested: usize, fed: usize },

    #[error("privacy calibration: {0}")]
    Privacy(String),

    #[error("conditioning clamp fired {events} times in {episodes} episodes")]
    Conditioning { events: usize, episodes: usize },

    #[error("no traces to emit")]
    EmptyTraces,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
