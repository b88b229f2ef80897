use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("boundary condition violated: {0}")]
    Boundary(String),
    #[error("conjugacy not monotone: {0}")]
    NotMonotone(String),
    #[error("point outside domain: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("tower construction failed: {0}")]
    Tower(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
