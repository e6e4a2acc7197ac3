use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the embedding, training and sampling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("shape error in {context}: {message}")]
    Shape { context: String, message: String },
    #[error("graph is disconnected: component sizes {sizes:?}")]
    Connectivity { sizes: Vec<usize> },
    #[error("eigensolver did not converge (residual {residual:e})")]
    Convergence { residual: f64 },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("perplexity calibration failed: {0}")]
    Calibration(String),
    #[error("optimization diverged at iteration {iteration}")]
    Optimization { iteration: usize },
    #[error("dimension {dim} has zero variance")]
    DegenerateDimension { dim: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sampling produced non-finite values at timestep {timestep}")]
    Sampling { timestep: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::Data(_) => "DataError",
            Error::Parameter(_) => "ParameterError",
            Error::Shape { .. } => "ShapeError",
            Error::Connectivity { .. } => "ConnectivityError",
            Error::Convergence { .. } => "ConvergenceError",
            Error::Solver(_) => "SolverError",
            Error::Calibration(_) => "CalibrationError",
            Error::Optimization { .. } => "OptimizationError",
            Error::DegenerateDimension { .. } => "DegenerateDimensionError",
            Error::Config(_) => "ConfigError",
            Error::Sampling { .. } => "SamplingError",
            Error::Alignment(_) => "AlignmentError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
