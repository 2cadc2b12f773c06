use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("meshes are not nested: fine resolution {fine} is not a multiple of coarse resolution {coarse}")]
    NonNested { coarse: usize, fine: usize },

    #[error("meshes do not match: {0}")]
    MeshMismatch(String),

    #[error("oversampling factor must be at least 1, got {0}")]
    InvalidFactor(f64),

    #[error("degenerate oversampling patch for element {element}: change-of-basis system is singular")]
    SingularBasis { element: usize },

    #[error("coefficient is not elliptic: sampled value {value} at ({x}, {y})")]
    NonElliptic { value: f64, x: f64, y: f64 },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("iterative solver broke down after {iterations} iterations (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },

    #[error("zero or non-finite diagonal entry in row {row}")]
    SingularDiagonal { row: usize },

    #[error("matrix is singular (zero pivot in column {column})")]
    SingularMatrix { column: usize },

    #[error("invalid penalty configuration: {0}")]
    InvalidPenalty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
