use thiserror::Error;

pub type Result<T> = std::result::Result<T, NavError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    /// A point fell outside the open chart domain.
    #[error("point ({x}, {y}) is outside the chart domain")]
    OutsideDomain { x: f64, y: f64 },

    /// An integration left the chart (or entered the guard band around its
    /// boundary); `state` is the last accepted state, in integrator coordinates.
    #[error("trajectory left the chart at t = {t}")]
    ChartExit { t: f64, state: Vec<f64> },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

impl NavError {
    pub fn validation(msg: impl Into<String>) -> Self {
        NavError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        NavError::Numerical(msg.into())
    }

    /// Domain-type errors (as opposed to validation or numerical ones).
    pub fn is_domain(&self) -> bool {
        matches!(self, NavError::OutsideDomain { .. } | NavError::ChartExit { .. })
    }
}
