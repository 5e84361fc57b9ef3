use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix argument was malformed: non-finite entries, asymmetry where
    /// symmetry is required, or a non-square input to a square-only routine.
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// Operand dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A sketch, objective, or experiment configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidSpec(String),

    /// An experiment, chain, or federated configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An iterate left the finite range or blew past the divergence threshold.
    /// Carries the step index and the last objective value observed.
    #[error("divergence detected at step {step} (f = {f_value})")]
    Divergence { step: usize, f_value: f64 },

    /// The requested quantity cannot be computed for this objective.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// File could not be read, written, or parsed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A trace, config, or dataset file had unparseable contents.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
