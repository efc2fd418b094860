use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integration step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("quadrature did not converge to {tol:e} (last change {delta:e})")]
    QuadratureNonConvergence { tol: f64, delta: f64 },

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        report: Box<crate::model::TrainReport>,
    },

    #[error("algebraic certificate failed: {0}")]
    Certificate(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("stale artifact {path}: hash mismatch")]
    HashMismatch { path: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
