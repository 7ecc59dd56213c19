use std::path::PathBuf;

use crate::llm::LlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown label `{label}` (line {line})")]
    UnknownLabel { label: String, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("embedding sidecar has no vector for document `{0}`")]
    MissingEmbedding(String),

    #[error("embedding sidecar has vector for unknown document `{0}`")]
    ExtraEmbedding(String),

    #[error("zero vector for `{0}`")]
    ZeroVector(String),

    #[error("dimension mismatch for `{id}`: expected {expected}, found {found}")]
    DimMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("no query embedding for seed `{0}`")]
    MissingQueryEmbedding(String),

    #[error("cannot draw {requested} shots from a pool of {available}")]
    NotEnoughShots { requested: usize, available: usize },

    #[error("entity type `{0}` does not occur in the records")]
    AbsentEntityType(String),

    #[error("example `{0}` does not have the same epochs as the others")]
    RaggedEpochs(String),

    #[error("training dynamics need at least 2 epochs, found {0}")]
    TooFewEpochs(usize),

    #[error("no data map point for example `{0}`")]
    MissingDataPoint(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("stage `{stage}` needs {path}; run `{run_first}` first")]
    MissingArtifact {
        stage: String,
        path: PathBuf,
        run_first: String,
    },

    #[error("response cache {path} is corrupt at line {line} ({message}); delete it to rebuild")]
    CacheCorrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("bootstrap for class `{label}` gave up after {attempts} attempts: {reason}")]
    Bootstrap {
        label: String,
        attempts: usize,
        reason: String,
    },

    #[error("oracle classifier: {0}")]
    Oracle(String),

    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
