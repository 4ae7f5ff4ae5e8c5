use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("cannot fuse an empty detection group")]
    EmptyGroup,

    #[error("detections span several frames ({0} and {1})")]
    MixedFrames(i64, i64),

    #[error("frame discontinuity: expected frame {expected}, got {got}")]
    FrameDiscontinuity { expected: i64, got: i64 },

    #[error("horizon mismatch: prediction has {pred} steps, ground truth has {gt}")]
    HorizonMismatch { pred: usize, gt: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
