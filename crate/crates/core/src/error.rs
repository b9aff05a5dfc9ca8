use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, kernel sizes or parameters that violate an operation contract.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad user data: mismatched masks, unreadable images, missing files.
    #[error("input error: {0}")]
    Input(String),

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("unexpected weight tensor `{0}`")]
    UnexpectedWeight(String),

    #[error("weight tensor `{name}` has dims {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::MissingWeight(_) => "missing-weight",
            Error::UnexpectedWeight(_) => "unexpected-weight",
            Error::WeightShape { .. } => "weight-shape",
            Error::Format(e) => e.kind(),
            Error::Io { .. } => "io",
        }
    }

    /// True for problems with weights or configuration as opposed to input data.
    pub fn is_weight_or_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingWeight(_)
                | Error::UnexpectedWeight(_)
                | Error::WeightShape { .. }
                | Error::Format(_)
        )
    }
}

/// Decoding failures of the named-tensor weight file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("{0}")]
    Unencodable(String),
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            FormatError::BadMagic(_) => "bad-magic",
            FormatError::BadVersion(_) => "bad-version",
            FormatError::Truncated { .. } => "truncated",
            FormatError::TrailingBytes(_) => "trailing-bytes",
            FormatError::UnsupportedDtype(_) => "bad-dtype",
            FormatError::DuplicateName(_) => "duplicate-name",
            FormatError::InvalidName => "bad-name",
            FormatError::Unencodable(_) => "unencodable",
        }
    }
}
