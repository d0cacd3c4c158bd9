use thiserror::Error;

use sfl_core::{OptimizeError, ValidationError};
use sfl_sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("`{key} = {value}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("unknown policy `{0}` (expected oms-ocs, fms-ocs, uniform, weighted, round-robin or random-fixed-split)")]
    UnknownPolicy(String),
    #[error("invalid population: {0}")]
    Population(#[from] ValidationError),
    #[error("optimizer: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("simulation: {0}")]
    Simulation(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
