use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unmatched locations: {}", .0.join(", "))]
    UnmatchedLocations(Vec<String>),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid date range {start} .. {end}")]
    DateRange { start: NaiveDate, end: NaiveDate },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series too short: need {needed} observed periods, have {available}")]
    TooShort { needed: usize, available: usize },

    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("optimizer did not converge within {iterations} iterations (last objective {objective})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("receptive field {receptive_field} exceeds training window {window}")]
    ReceptiveField { receptive_field: usize, window: usize },

    #[error("masked period at {date} inside the final input window; shift the forecast origin to after the excluded span")]
    MaskedTail { date: NaiveDate },

    #[error("horizon {horizon} outside the supported range 1..={max}")]
    Horizon { horizon: usize, max: usize },

    #[error("no backtest folds: {0}")]
    NoFolds(String),

    #[error("model `{name}` failed: {source}")]
    Model {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("weights file: {0}")]
    Weights(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
