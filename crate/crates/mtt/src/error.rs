use std::io;
use std::path::{Path, PathBuf};

/// Errors from file formats and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: unsupported WAV encoding: {reason}", path.display())]
    UnsupportedWav { path: PathBuf, reason: String },
    #[error("{}: truncated or malformed WAV: {reason}", path.display())]
    MalformedWav { path: PathBuf, reason: String },
    #[error("{}: cannot decode image: {reason}", path.display())]
    Image { path: PathBuf, reason: String },
    #[error("{}: bad metadata: {reason}", path.display())]
    Metadata { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] mtt_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 2 for anything wrong with a file, 3 for invalid
    /// parameters or inconsistent inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::UnsupportedWav { .. }
            | Error::MalformedWav { .. }
            | Error::Image { .. }
            | Error::Metadata { .. } => 2,
            Error::Invalid(_) | Error::Core(_) => 3,
        }
    }
}
