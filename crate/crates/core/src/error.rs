use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong across the library surface.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid extents are too small for the stencil radius.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Tiling or threading parameters violate a precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A time step or index lies outside the object it was asked about.
    #[error("out of range: {0}")]
    Range(String),

    /// The scheduler was driven in a way its contract forbids.
    #[error("scheduler contract violation: {0}")]
    Contract(String),

    /// The tuner found nothing admissible to measure.
    #[error("no feasible tuning point: {0}")]
    NoFeasiblePoint(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
