use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Variants split into user/config errors (bad inputs, malformed files,
/// violated preconditions) and infrastructure errors (I/O). The CLI maps the
/// former to exit code 2 and the latter to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown joint layout '{0}' (registered: body32, body17, hand21)")]
    UnknownLayout(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),

    #[error("frame-count mismatch for clip '{clip_id}': body has {body_frames} frames, hands file has {hand_frames}")]
    FrameCountMismatch {
        clip_id: String,
        body_frames: usize,
        hand_frames: usize,
    },

    #[error("joint {joint} has nonpositive depth z={z}; cannot project to the image plane")]
    NonPositiveDepth { joint: usize, z: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encode error: {0}")]
    Image(String),
}

impl Error {
    /// Process exit code for the CLI contract: 1 infrastructure, 2 user/config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Image(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
