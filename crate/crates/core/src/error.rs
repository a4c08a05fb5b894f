use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter index {index} out of range for {count} parameters")]
    ParamIndex { index: usize, count: usize },
    #[error("non-finite field value at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("singular system: zero pivot at restricted index {index}")]
    SingularSystem { index: usize },
    #[error("linear solve residual {residual:e} exceeds bound {bound:e}")]
    Residual { residual: f64, bound: f64 },
    #[error("target set is empty")]
    EmptyTarget,
    #[error("workspace was built for a different generator")]
    StaleWorkspace,
    #[error("coverage constraint violated: g(b0) = {g}, required at least {required}")]
    ConstraintViolated { g: f64, required: f64 },
    #[error("field has no affine parameter decomposition")]
    NotAffine,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
