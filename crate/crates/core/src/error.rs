use std::path::PathBuf;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file could be read but a specific line could not be understood.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Structurally valid input whose content violates the expected schema,
    /// e.g. a negative label or an artifact with the wrong version tag.
    #[error("schema: {0}")]
    Schema(String),

    /// A loaded value set fails a cross-field consistency check.
    #[error("validation: {0}")]
    Validation(String),

    /// A function argument violates its documented contract.
    #[error("input: {0}")]
    Input(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training: {0}")]
    Training(String),

    /// An attacker ran out of victim queries mid-attack. Attack drivers
    /// convert this into a failed `AttackRecord`; it only escapes when a
    /// caller queries a `VictimHandle` directly.
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },

    /// The exhaustive attacker refuses search spaces above its cap rather
    /// than silently truncating them.
    #[error("search space of {size} substitution combinations exceeds cap {cap}")]
    SearchSpaceExceeded { size: u128, cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience for wrapping `std::io::Error` with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
