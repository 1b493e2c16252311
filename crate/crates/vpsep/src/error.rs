use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum VpsError {
    #[error("grid: {0}")]
    Grid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical abort at t = {time}: {reason}")]
    Numerical { time: f64, reason: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VpsError>;
