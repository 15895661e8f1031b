use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("deconvolution cannot reach target length {target} from input length {input} (kernel {kernel}, stride {stride})")]
    UnreachableTarget {
        input: usize,
        target: usize,
        kernel: usize,
        stride: usize,
    },

    #[error("unknown activity label {0:?}")]
    UnknownLabel(String),

    #[error("target set has cardinality {cardinality} but the model supports at most {max}")]
    CardinalityOverflow { cardinality: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing parameter group {0}")]
    MissingGroup(&'static str),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("malformed {what} at {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            path: path.into(),
            detail: detail.into(),
        }
    }
}
