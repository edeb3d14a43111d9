use thiserror::Error;

/// Errors surfaced by mesh handling, factorization and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial degree {0} outside supported range 1..=20")]
    InvalidDegree(usize),

    #[error("singular matrix while {context}")]
    Singular { context: String },

    #[error("mesh format error: {0}")]
    MeshFormat(String),

    #[error("invalid mesh: {0}")]
    MeshInvalid(String),

    #[error("closest-point projection failed at ({x:.6}, {y:.6}, {z:.6}): {reason}")]
    ProjectionFailed { x: f64, y: f64, z: f64, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown builtin name: {0}")]
    UnknownBuiltin(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
