use std::path::PathBuf;

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {requested} but clock is already at {now}")]
    ScheduleInPast { now: SimTime, requested: SimTime },

    #[error("transmission attempted on a link in outage (rate 0)")]
    LinkInOutage,

    #[error("random access failed: target cell {0} in outage")]
    AccessFailure(u32),

    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("conservation violated: {0}")]
    Conservation(String),

    #[error("cannot aggregate: {0}")]
    Aggregate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
