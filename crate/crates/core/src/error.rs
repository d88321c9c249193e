use std::sync::Arc;

use thiserror::Error;

/// Errors produced by model construction, simulation and sampling.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("infinite mean: shifted Pareto shape {shape} must exceed 1")]
    InfiniteMean { shape: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid rates: {0}")]
    InvalidRates(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stationary solver did not converge within {cap} iterations (residual {residual:e})")]
    NoConvergence { cap: usize, residual: f64 },

    #[error("explosion guard: more than {cap} {what}")]
    Explosion { what: &'static str, cap: u64 },

    #[error("invalid contraction rate: mean C = {mean_c} (need < 1)")]
    InvalidRate { mean_c: f64 },

    #[error("moment condition fails at order {order}: E[C^{order}] = {value} (+3 SE = {upper}) is not < 1")]
    MomentCondition { order: usize, value: f64, upper: f64 },

    #[error("stirling number S({n}, {k}) out of range")]
    StirlingRange { n: usize, k: usize },

    #[error("empty sample: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(Arc<std::io::Error>),

    #[error(transparent)]
    Csv(Arc<csv::Error>),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(Arc::new(e))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(Arc::new(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
