use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("window/hop pair does not satisfy the overlap-add condition (M={window}, R={hop})")]
    NotCola { window: usize, hop: usize },

    #[error("spectrogram is {actual}, expected {expected}")]
    WrongSpectrogramKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("spectrogram already has {bins} bins (Nyquist bin trimmed)")]
    AlreadyTrimmed { bins: usize },

    #[error("insufficient decay range: energy decay curve only reaches {reached_db:.1} dB")]
    InsufficientDecay { reached_db: f64 },

    #[error("signal is silent")]
    Silent,

    #[error("channel layout mismatch: {layout} expects {expected} channels, got {actual}")]
    ChannelLayout {
        layout: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model has not been trained")]
    Untrained,

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
