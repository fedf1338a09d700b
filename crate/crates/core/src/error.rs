use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x0}, {y0}, {x1}, {y1}): need x0 < x1 and y0 < y1")]
    InvalidBox { x0: u32, y0: u32, x1: u32, y1: u32 },

    #[error("box ({x0}, {y0}, {x1}, {y1}) exceeds the {width}x{height} frame")]
    BoxOutOfFrame {
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, found {found_h}x{found_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("score map contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("score map cannot be calibrated: {0}")]
    Uncalibratable(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no foreground pixels in the evaluated set; recall is undefined")]
    NoForeground,

    #[error("IoU threshold {0} is not present in the curve")]
    MissingDelta(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("no score map for image '{image_id}' in {dir} (tried .wsm, .png, bare id)")]
    MissingScoreMap { image_id: String, dir: PathBuf },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
