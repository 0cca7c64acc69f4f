use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("NaN gradient for parameter `{0}`")]
    NanGradient(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("both classes required, got {n_real} real / {n_fake} fake")]
    SingleClass { n_real: usize, n_fake: usize },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("truncated payload: {0}")]
    TruncatedPayload(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("every hyperparameter trial failed")]
    AllTrialsFailed,

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable short tag used in the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NanGradient(_) => "nan_gradient",
            Error::Diverged { .. } => "diverged",
            Error::SingleClass { .. } => "single_class",
            Error::CorruptHeader(_) => "corrupt_header",
            Error::TruncatedPayload(_) => "truncated_payload",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::AllTrialsFailed => "all_trials_failed",
            Error::UnknownFormat(_) => "unknown_format",
            Error::ConfigParse(_) => "config_parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
