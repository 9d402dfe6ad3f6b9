use thiserror::Error;

/// Errors surfaced by scenario construction and the solver stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid range [{lo}, {hi}] for {what}")]
    InvalidRange { what: &'static str, lo: f64, hi: f64 },

    #[error("distance {d} m is below the 1 m reference distance of the path-loss model")]
    OutOfModel { d: f64 },

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("index out of range: {0}")]
    Index(String),
}

pub type Result<T> = std::result::Result<T, Error>;
