use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("rejection sampling gave up after {0} attempts")]
    RejectionLimit(usize),

    #[error("operation requires K = 1, got K = {0}")]
    RequiresSingleUser(usize),

    #[error("equalizer must be strictly positive, got {0}")]
    NonPositiveEqualizer(f64),

    #[error("negative SINR {0} has no rate")]
    NegativeSinr(f64),

    #[error("zero-forcing needs a full-row-rank in-cell channel (cell {0})")]
    RankDeficient(usize),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("invalid experiment config: {0}")]
    InvalidExperiment(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),
}
