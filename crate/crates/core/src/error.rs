use std::fmt;

use thiserror::Error;

/// A single violated bound on a parameter record.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

/// Every bound a record violates, reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub record: &'static str,
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: ", self.record)?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

/// Per-start outcome of a multi-start likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct StartDiagnostic {
    pub start_index: usize,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error(
        "target {label} unreachable: metric at h_max = {h_max} is {achieved:.6e}, above threshold {threshold:.6e}"
    )]
    TargetUnreachable {
        label: String,
        h_max: f64,
        achieved: f64,
        threshold: f64,
    },

    #[error("no triple-A default-probability threshold configured")]
    MissingPdThreshold,

    #[error("Poisson truncation tail mass {tail:.3e} exceeds tolerance {tolerance:.3e}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("diffusion volatility must be positive to evaluate a return density")]
    DegenerateDiffusion,

    #[error("inconsistent metrics: expected loss {el:.6e} exceeds expected shortfall {es:.6e}")]
    InconsistentMetrics { el: f64, es: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Series { line: usize, message: String },

    #[error("no optimization start converged ({} starts tried)", diagnostics.len())]
    NoConvergence { diagnostics: Vec<StartDiagnostic> },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
