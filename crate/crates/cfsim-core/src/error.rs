//! Error types shared across the library.

use thiserror::Error;

/// Devices whose power coefficients left `[0, 1]` in a target-rate run.
#[derive(Debug, Clone)]
pub struct InfeasibilityReport {
    /// Indices of devices whose η fell outside `[0, 1]`.
    pub violators: Vec<usize>,
    /// The offending power coefficients, aligned with `violators`.
    pub eta: Vec<f64>,
    /// Which pass of the algorithm gave up (1 or 2).
    pub pass: u8,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "pass {}: {} device(s) outside [0,1]:",
            self.pass,
            self.violators.len()
        )?;
        for (k, eta) in self.violators.iter().zip(&self.eta) {
            write!(f, " k={k} eta={eta:.6e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: {detail}")]
    Dimension {
        context: &'static str,
        detail: String,
    },

    #[error("matrix not positive definite: pivot {pivot:.3e} at index {index}")]
    NotPositiveDefinite { pivot: f64, index: usize },

    #[error(
        "iteration did not converge: residual {residual:.3e} after {iterations} iterations \
         (tolerance {tol:.1e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("target infeasible: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("conditioning failure in {context}: {detail}")]
    Conditioning {
        context: &'static str,
        detail: String,
    },

    #[error("convex feasibility solver failed: {0}")]
    Solver(String),

    #[error("network generation failed: {0}")]
    Generation(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("insufficient statistical power: {0}")]
    Statistics(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Infeasible(_) => "infeasible",
            Error::Conditioning { .. } => "conditioning",
            Error::Solver(_) => "solver",
            Error::Generation(_) => "generation",
            Error::Training(_) => "training",
            Error::Statistics(_) => "statistics",
            Error::Empty(_) => "empty",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
