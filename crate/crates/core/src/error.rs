use thiserror::Error;

/// Errors produced anywhere in the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("eigenvector centrality did not converge after {0} iterations")]
    Convergence(usize),
    #[error("invalid action: edge {edge}: {reason}")]
    InvalidAction { edge: usize, reason: String },
    #[error("deadlock: no admissible edge reaches the {0} unconnected face(s)")]
    Deadlock(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("node {0} has no incident edges")]
    IsolatedNode(usize),
    #[error("every action is masked")]
    EmptyMask,
    #[error("non-finite value in {0}")]
    Numerical(String),
    #[error("place {0} cannot be reached from the road network")]
    Disconnected(usize),
    #[error("search space too large: {0}")]
    TooLarge(String),
    #[error("unknown variant: {0}")]
    UnknownVariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Geometry(_) => "GeometryError",
            Error::Topology(_) => "TopologyError",
            Error::Domain(_) => "DomainError",
            Error::Convergence(_) => "ConvergenceError",
            Error::InvalidAction { .. } => "InvalidAction",
            Error::Deadlock(_) => "DeadlockError",
            Error::Config(_) => "ConfigError",
            Error::Shape(_) => "ShapeError",
            Error::IsolatedNode(_) => "IsolatedNodeError",
            Error::EmptyMask => "EmptyMaskError",
            Error::Numerical(_) => "NumericalError",
            Error::Disconnected(_) => "DisconnectedError",
            Error::TooLarge(_) => "TooLargeError",
            Error::UnknownVariant(_) => "UnknownVariant",
            Error::Io(_) => "IoError",
            Error::Json(_) => "ParseError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
