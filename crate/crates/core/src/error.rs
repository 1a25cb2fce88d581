use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("mesh mismatch: fields live on different meshes")]
    MeshMismatch,

    #[error("solver failed after {iterations} iterations (residual {residual:.3e}): {reason}")]
    SolverFailed {
        reason: String,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParams(_) | Error::InvalidMesh(_) => 2,
            Error::InvariantViolation(_) => 4,
            _ => 3,
        }
    }
}
