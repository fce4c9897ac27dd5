use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (max relative deviation {0:.3e})")]
    Asymmetric(f64),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("token id {id} is outside the vocabulary of size {vocab_size}")]
    Vocabulary { id: u32, vocab_size: usize },

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("correlation is undefined for a constant series")]
    UndefinedCorrelation,

    #[error(
        "neighbour graph has {components} connected components; increase k_neighbors to connect it"
    )]
    Disconnected { components: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad checkpoint format: {0}")]
    Format(String),

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("report is missing runs for: {0}")]
    MissingRuns(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical or training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Input(_)
            | Error::Vocabulary { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Format(_)
            | Error::Corruption(_)
            | Error::Config(_)
            | Error::MissingRuns(_) => 2,
            Error::Shape(_)
            | Error::Asymmetric(_)
            | Error::UndefinedSimilarity
            | Error::UndefinedCorrelation
            | Error::Disconnected { .. }
            | Error::Numerical(_) => 3,
        }
    }
}
