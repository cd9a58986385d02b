use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The byte stream is not a well-formed container or file of the expected kind.
    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("upsampling from {from} Hz to {to} Hz is not supported")]
    UnsupportedUpsample { from: u32, to: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    /// A track too short to hold a single chunk.
    #[error("track of {track_len} samples is shorter than one {chunk_len}-sample chunk")]
    EmptyPlan { track_len: usize, chunk_len: usize },

    #[error("dataset build error: {0}")]
    DatasetBuild(String),

    /// Training produced a NaN or infinite value.
    #[error("non-finite value at epoch {epoch}, batch {batch}: {what}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("I/O error on {path:?}: {source}")]
    PathIo {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::PathIo {
            path: path.into(),
            source,
        }
    }
}
