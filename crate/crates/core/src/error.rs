use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("Gram matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("CFL condition violated: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("dimension {dim} exceeds the cap of {cap}; use the scenario oracle or a smaller model")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("process is not adapted: {0}")]
    NotAdapted(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
