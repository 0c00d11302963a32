use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("output has no relative degree up to the state dimension {0}")]
    NoRelativeDegree(usize),

    #[error("invalid input bounds: lower bound exceeds upper bound at component {0}")]
    InvalidBounds(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("HOCBF baseline supports linear class-K functions only, got {0}")]
    NonlinearAlphaUnsupported(&'static str),

    #[error("weight {name}[{index}] must be positive, got {value}")]
    NonPositiveWeight {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("quadratic program is infeasible")]
    Infeasible,

    #[error("active-set solver hit the iteration limit ({0})")]
    MaxIterations(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
