use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("LUT size must be at least 2, got {0}")]
    LutSize(usize),

    #[error("LUT size mismatch: {0} vs {1}")]
    LutSizeMismatch(usize, usize),

    #[error("cube parse error at line {line}: {msg}")]
    CubeParse { line: usize, msg: String },

    #[error("weight count {got} does not match bank basis count {expected}")]
    WeightCount { expected: usize, got: usize },

    #[error("image contains a non-finite pixel value")]
    NanPixel,

    #[error("empty image")]
    EmptyImage,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward requires a scalar loss, got {0} elements")]
    NonScalarLoss(usize),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("blend weight {0} outside [0, 1]")]
    BlendWeight(f64),

    #[error("undersized source image: {width}x{height}, need at least {need}x{need}")]
    UndersizedSource { width: usize, height: usize, need: usize },

    #[error("empty clip")]
    EmptyClip,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image decode error: {0}")]
    Decode(String),
}
