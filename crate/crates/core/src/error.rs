use std::io;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text input (instance file, sample file, CSV, config) is malformed.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// The requested configuration cannot produce any valid output
    /// (e.g. multi-cell loops on a single-cell graph).
    #[error("unsatisfiable configuration: {0}")]
    UnsatisfiableConfig(String),

    /// Loop generation exhausted its retry budget before reaching the
    /// target loop count.
    #[error("loop generation failed: accepted {accepted} of {target} loops before the retry budget ran out")]
    GenerationFailure { accepted: usize, target: usize },

    /// An on-disk artifact no longer matches the inputs it was derived from.
    #[error("stale input: {0}")]
    StaleInput(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for data/format problems,
    /// 3 for generation failures. (Usage errors exit 1 before reaching here.)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsatisfiableConfig(_) | Error::GenerationFailure { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
