use thiserror::Error;

/// Failures raised while building, transforming, or scoring optical states.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("parameter out of bounds: {0}")]
    ParameterBound(String),

    #[error("state is not normalized (squared norm {0})")]
    Normalization(f64),

    #[error("state has vanishing norm")]
    ZeroState,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("probe carries no photons")]
    ZeroPhoton,

    #[error("posterior vanished on every grid point")]
    DegeneratePosterior,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
