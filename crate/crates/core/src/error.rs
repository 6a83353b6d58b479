use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unsupported geometry at line {line}: {message}")]
    UnsupportedGeometry { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate topology: vertex {vertex} has no incident edge")]
    DegenerateTopology { vertex: usize },

    #[error("overlapping UV triangles: {pairs:?}")]
    UvOverlap { pairs: Vec<(usize, usize)> },

    #[error("vertex {vertex} samples a fully masked-out neighborhood")]
    UnsampleableVertex { vertex: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid rig: {}", .0.join("; "))]
    InvalidRig(Vec<String>),

    #[error("shape {index} ({name}) has all-zero displacement")]
    DegenerateShape { index: usize, name: String },

    #[error("rig pairing: {0}")]
    RigPairing(String),

    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("objective increased between alternation rounds: {trace:?}")]
    ConvergenceFailure { trace: Vec<f64> },

    #[error("warp amplitude inverts triangle {face}")]
    Amplitude { face: usize },

    #[error("checksum mismatch for {path}")]
    Checksum { path: String },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConvergenceFailure { .. } => 3,
            Error::Io { .. } | Error::Image(_) | Error::Locked(_) | Error::Checksum { .. } => 4,
            _ => 2,
        }
    }
}
