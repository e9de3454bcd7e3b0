use thiserror::Error;

#[derive(Debug, Error)]
pub enum NschError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("assumption {rule} violated: {message}")]
    Assumption { rule: String, message: String },
    #[error("incompatible right-hand side: {0}")]
    Compatibility(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("logarithmic barrier reached at s = {0}")]
    Barrier(f64),
    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    StepFailure { iterations: usize, residual: f64 },
    #[error("run aborted at step {step}: {reason}")]
    RunAborted { step: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NschError>;

impl NschError {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            NschError::Config(_) | NschError::Assumption { .. } | NschError::InvalidInput(_) => 1,
            _ => 2,
        }
    }
}
