use chrono::NaiveDate;
use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, AimError>;

#[derive(Debug, Error)]
pub enum AimError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("duplicate subscriber id `{0}` in signups")]
    DuplicateSubscriber(String),

    #[error("{file}:{line}: unknown subscriber `{subscriber_id}`")]
    UnknownSubscriber {
        file: String,
        line: u64,
        subscriber_id: String,
    },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("launch `{content_id}` has no signups in its pre-launch control window")]
    EmptyControl { content_id: String },

    #[error("{}baseline rate {rate} leaves an unstable denominator (must be below 1 - 1e-3)", day_prefix(.date))]
    UnstableDenominator { rate: f64, date: Option<NaiveDate> },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("quota {quota} for content `{content_id}` exceeds its {candidates} candidates")]
    Infeasible {
        content_id: String,
        quota: u32,
        candidates: usize,
    },

    #[error(
        "instance too large for exhaustive search: {candidates} candidate pairs (limit {limit})"
    )]
    TooLarge { candidates: usize, limit: usize },

    #[error("insufficient data: need {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn day_prefix(date: &Option<NaiveDate>) -> String {
    match date {
        Some(d) => format!("{d}: "),
        None => String::new(),
    }
}

impl AimError {
    /// Failures of the computation itself, as opposed to bad input or configuration.
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            AimError::EmptyControl { .. }
                | AimError::UnstableDenominator { .. }
                | AimError::Infeasible { .. }
                | AimError::InsufficientData { .. }
                | AimError::TooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AimError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        AimError::Json {
            path: path.into(),
            source,
        }
    }
}
