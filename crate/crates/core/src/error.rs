use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("malformed audio: {0}")]
    Format(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("empty audio: {0}")]
    EmptyAudio(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("duplicate clip id `{0}`")]
    DuplicateClip(String),
    #[error("track `{0}` appears in both train and val splits")]
    SplitLeakage(String),
    #[error("tensor file: {0}")]
    Tensor(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("{0}")]
    Data(String),
}

impl Error {
    /// True for failures caused by non-finite arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = core::result::Result<T, Error>;
