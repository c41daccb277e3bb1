use thiserror::Error;

#[derive(Debug, Error)]
pub enum CdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("singular state: {0}")]
    Singularity(String),

    #[error("degenerate kernel: no gap between retained kernel ({kernel_dim}) and the rest, eigenvalues {eigenvalues:?}")]
    DegenerateKernel { kernel_dim: usize, eigenvalues: Vec<f64> },

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("degenerate linear system: every Gram eigenvalue fell below the cutoff but |b| = {b_norm:e}")]
    DegenerateSystem { b_norm: f64 },

    #[error("integrator failed at step {step}: {msg}")]
    Integrator { step: usize, msg: String },

    #[error("target out of range: {0}")]
    OutOfRange(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CdResult<T> = Result<T, CdError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> CdResult<T> {
    Err(CdError::Domain(msg.into()))
}
