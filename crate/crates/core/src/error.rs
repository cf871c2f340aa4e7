use thiserror::Error;

pub type Result<T> = std::result::Result<T, CvnnError>;

/// Errors raised by the library. Display strings carry the originating module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvnnError {
    #[error("complex: non-finite function value at stencil point {point}")]
    OracleEvaluation { point: String },

    #[error("{module}: shape mismatch: expected {expected}, got {got}")]
    Shape {
        module: &'static str,
        expected: String,
        got: String,
    },

    #[error("{module}: domain error: {reason}")]
    Domain { module: &'static str, reason: String },

    #[error("activation: {kind} is not differentiable")]
    NonDifferentiable { kind: String },

    #[error("{module}: unsupported: {reason}")]
    Unsupported { module: &'static str, reason: String },

    #[error("batchnorm: singular statistics (eigenvalues {lo:e}, {hi:e})")]
    SingularStatistics { lo: f64, hi: f64 },

    #[error("batchnorm: batch of size {size} is too small (need at least 2)")]
    InsufficientBatch { size: usize },

    #[error("{module}: invalid parameter: {reason}")]
    InvalidParam { module: &'static str, reason: String },

    #[error("parse error at {position}: {reason}")]
    Parse { position: String, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl CvnnError {
    pub(crate) fn shape(module: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        CvnnError::Shape {
            module,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(module: &'static str, reason: impl Into<String>) -> Self {
        CvnnError::InvalidParam {
            module,
            reason: reason.into(),
        }
    }

    /// True for errors caused by numerical conditions rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CvnnError::OracleEvaluation { .. }
                | CvnnError::Domain { .. }
                | CvnnError::SingularStatistics { .. }
                | CvnnError::NonDifferentiable { .. }
        )
    }
}

impl From<std::io::Error> for CvnnError {
    fn from(e: std::io::Error) -> Self {
        CvnnError::Io(e.to_string())
    }
}
