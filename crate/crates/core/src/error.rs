use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    TrainingDiverged { epoch: usize, step: usize, loss: f64 },

    #[error("scaler fit failed at iteration {iteration}: NLL is {nll}")]
    FitFailed { iteration: usize, nll: f64 },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a pipeline stage label.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Parse errors for the on-disk formats. Offsets are byte offsets into the file.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {found} at offset {offset} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16, offset: usize },

    #[error("truncated file: need {expected} bytes, have {actual} (first missing byte at offset {actual})")]
    Truncated { expected: usize, actual: usize },

    #[error("{extra} trailing bytes after offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("bad header at offset {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },

    #[error("label {label} of input {index} at offset {offset} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: u32,
        offset: usize,
    },

    #[error("non-finite logit at offset {offset}")]
    NonFiniteLogit { offset: usize },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
}
