use thiserror::Error;

pub type Result<T, E = NumError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("index {index} out of bounds for length {len} in {op}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("empty attention support")]
    EmptyAttentionSupport,

    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NonScalarLoss(usize, usize),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
