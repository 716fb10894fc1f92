use thiserror::Error;

use crate::prediction::AgentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("transform offset must be positive, got {0}")]
    NonPositiveOffset(f64),
    #[error("goal radius must be positive, got {0}")]
    NonPositiveGoalRadius(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("constraint set is empty")]
    Infeasible,
    #[error("malformed problem: {0}")]
    InvalidProblem(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("agent {agent}: observation at t={time} is not after last sample at t={last}")]
    OutOfOrder { agent: AgentId, time: f64, last: f64 },
    #[error("probability threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("invalid predictor configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Problems found while reading or validating a scenario file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
}
