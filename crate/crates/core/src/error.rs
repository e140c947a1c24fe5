use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (relative residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("eigensolver did not converge within {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("eigenvalue {value:.6e} is below the negativity tolerance; matrix is not positive semidefinite")]
    NegativeEigenvalue { value: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("feature vector length {got} does not match layout ({expected})")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("time grids are incompatible: {reason}")]
    GridMismatch { reason: String },

    #[error("trajectory is too short: need at least {need} samples, got {got}")]
    TrajectoryTooShort { need: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted { epoch: usize, reason: String },

    #[error("backward already consumed this tape; record a new forward pass first")]
    TapeConsumed,

    #[error("schedule index {t_cur} is out of range 0..={t_max}")]
    ScheduleOutOfRange { t_cur: usize, t_max: usize },

    #[error("missing column {name}; available: {available}")]
    MissingColumn { name: String, available: String },

    #[error("output directory {0} already contains a run; refusing to overwrite")]
    OutputDirNotEmpty(String),

    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
