use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("signal is silent: {0}")]
    Silent(&'static str),
    #[error("clip of {len} samples is shorter than one analysis window ({n_fft})")]
    ClipTooShort { len: usize, n_fft: usize },
    #[error("overlap-add normalization degenerate at sample {index} (window power {power:e})")]
    DegenerateNormalization { index: usize, power: f64 },
    #[error("spectral grid is constant; cannot normalize")]
    ConstantGrid,
    #[error("colormap line {line}: {reason}")]
    MalformedColormap { line: usize, reason: String },
    #[error("colormap value {value} on line {line} outside [0, 1]")]
    ColormapRange { line: usize, value: f64 },
    #[error("colormap channel sums not strictly increasing at entry {index}")]
    ColormapNotMonotone { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("model checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("unsupported model version (magic {0:?})")]
    Version([u8; 5]),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
