use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CpcError>;

#[derive(Debug, Error)]
pub enum CpcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive-definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("sinkhorn did not converge after {iterations} iterations (residual {residual:e}, tol {tol:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl CpcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CpcError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CpcError::NotPositiveDefinite(_)
                | CpcError::DegenerateDensity(_)
                | CpcError::UndefinedCorrelation(_)
                | CpcError::NonConvergence { .. }
        )
    }
}
