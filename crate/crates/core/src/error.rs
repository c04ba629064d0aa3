use thiserror::Error;

/// Operand shapes that do not conform for the named operation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
pub struct ShapeError {
    pub op: &'static str,
    pub lhs: (usize, usize),
    pub rhs: (usize, usize),
}

impl ShapeError {
    pub fn new(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Self { op, lhs, rhs }
    }
}

/// Coarse failure category, used by the command-line front end to pick an
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Certificate,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Certificate => 5,
        }
    }
}

/// Crate-level error that wraps every module error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Theory(#[from] crate::theory::TheoryError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Experiment(#[from] crate::experiments::ExperimentError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Graph(_) | Error::Io { .. } | Error::Json(_) => ErrorCategory::Data,
            Error::Config(_) => ErrorCategory::Config,
            Error::Model(crate::model::ModelError::FeatureDim { .. })
            | Error::Model(crate::model::ModelError::NoTrainingNodes) => ErrorCategory::Data,
            Error::Model(e) if e.is_config() => ErrorCategory::Config,
            Error::Memory(e) if e.is_config() => ErrorCategory::Config,
            Error::Experiment(e) if e.is_config() => ErrorCategory::Config,
            Error::Dynamics(e) if e.is_config() => ErrorCategory::Config,
            Error::Theory(crate::theory::TheoryError::CertificateFailed { .. }) => {
                ErrorCategory::Certificate
            }
            Error::Theory(crate::theory::TheoryError::Precondition(_)) => ErrorCategory::Config,
            _ => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
