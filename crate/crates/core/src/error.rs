use numkit::NumError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsatisfiable scene config (seed {seed}, {retries} retries)")]
    Unsatisfiable { seed: u64, retries: usize },

    #[error("degenerate similarity")]
    DegenerateSimilarity,

    #[error("empty description body")]
    EmptyDescriptionBody,

    #[error("invalid description: {0}")]
    Grammar(String),

    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),

    #[error("phase 1 requires LGAM")]
    Phase1RequiresLgam,

    #[error("need at least 2 positive pairs, got {0}")]
    TooFewPositives(usize),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Num(#[from] NumError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Phase1RequiresLgam | Error::Unsatisfiable { .. } => 2,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::Grammar(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 3,
            Error::Num(NumError::Checkpoint(_)) | Error::Num(NumError::Io(_)) => 3,
            Error::NonFinite(_) => 4,
            _ => 1,
        }
    }
}
