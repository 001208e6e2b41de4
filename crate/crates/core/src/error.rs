use thiserror::Error;

use crate::mdp::{ActionId, StateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("conflicting transition for ({state}, {action}) on a deterministic environment: cached ({cached_to}, {cached_reward}), observed ({observed_to}, {observed_reward})")]
    DeterminismViolation {
        state: StateId,
        action: ActionId,
        cached_to: StateId,
        cached_reward: f64,
        observed_to: StateId,
        observed_reward: f64,
    },
    #[error("discount factor {0} is outside (0, 1)")]
    InvalidGamma(f64),
    #[error("observed reward {reward} exceeds the configured maximum {r_max}")]
    RMaxViolated { reward: f64, r_max: f64 },
    #[error("no snapshot recorded for {0}")]
    SnapshotMissing(StateId),
    #[error("random target selection needs at least one known state")]
    EmptyKnownSet,
    #[error("{what} = {value} is out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("the all-still action is not part of the action space")]
    AllStillAction,
    #[error("visit counts are all zero")]
    EmptyCounts,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(
        "value iteration did not converge after {iterations} iterations (last change {delta})"
    )]
    NotConverged { iterations: usize, delta: f64 },
    #[error("greedy rollout found no repeated state within {0} steps")]
    NoCycleWithinBudget(usize),
    #[error("malformed snapshot: {0}")]
    BadSnapshot(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A configuration file problem, located by line (when known) and key.
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing run: {0}")]
    MissingRun(String),
    #[error("worker pool: {0}")]
    Workers(String),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Whether the error stems from configuration rather than execution.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidConfig(_) | Error::InvalidGamma(_)
        )
    }
}
