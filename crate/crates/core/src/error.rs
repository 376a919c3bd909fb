use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("training diverged at step {step} on batch [{batch}]: {detail}")]
    Diverged {
        step: u64,
        batch: String,
        detail: String,
    },

    #[error("missing gradient for trainable parameter `{0}`")]
    MissingGradient(String),

    #[error("insufficient entries for class `{class}` in dataset `{tag}`: need {need}, have {have}")]
    Starved {
        class: String,
        tag: String,
        need: usize,
        have: usize,
    },

    #[error(transparent)]
    Nifti(#[from] NiftiError),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures while decoding a NIfTI-1 byte stream.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum NiftiError {
    #[error("not NIfTI-1: {0}")]
    NotNifti(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("NIfTI dimensionality error: dim[0] = {0}, need at least 3 spatial dimensions")]
    Dimensionality(i16),

    #[error("invalid NIfTI header field {field}: {detail}")]
    InvalidField { field: &'static str, detail: String },

    #[error("truncated data section: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
}

impl Error {
    /// True for failures caused by NaN/Inf values during computation.
    pub fn is_non_finite(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
