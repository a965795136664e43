use std::path::PathBuf;

/// Errors produced by the tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("{file}: {message}")]
    Image { file: PathBuf, message: String },

    #[error("{file}: dimension mismatch, expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        file: PathBuf,
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("expected a {expected}-channel frame, got {got} channels")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("sequence shorter than block: {len} frames < T' = {t_prime}")]
    SequenceTooShort { len: usize, t_prime: usize },

    #[error("invalid block size T' = {0}, need at least 2 frames")]
    BadBlockSize(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error("unknown game id in protocol list: {0}")]
    UnknownGame(String),

    #[error("empty split manifest")]
    EmptyManifest,

    #[error("empty outcome list")]
    EmptyOutcomes,

    #[error("frame index mismatch: {0}")]
    FrameIndexMismatch(String),

    #[error("label for frame {frame} is out of bounds: ({x}, {y}) not inside {width}x{height}")]
    LabelOutOfBounds {
        frame: u64,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("{file}:{line}: {message}")]
    CsvParse {
        file: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
