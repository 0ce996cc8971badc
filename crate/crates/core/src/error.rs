use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The reduced stiffness matrix is singular or indefinite.
    #[error("design is a mechanism: {0}")]
    Mechanism(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("architecture mismatch: checkpoint has {found:?}, expected {expected:?}")]
    ArchitectureMismatch { found: String, expected: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case tag for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Shape(_) => "shape",
            Error::Mechanism(_) => "mechanism",
            Error::Numerical(_) => "numerical",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged(_) => "diverged",
            Error::Topology(_) => "topology",
            Error::Version { .. } => "version",
            Error::Corrupt(_) => "corrupt",
            Error::ArchitectureMismatch { .. } => "architecture_mismatch",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format(e.to_string())
    }
}
