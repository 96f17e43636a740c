use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading or validating input data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: missing column `{column}`{}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    MissingColumn {
        path: PathBuf,
        column: String,
        row: Option<usize>,
    },
    #[error("{path}: malformed row {row}: {problem}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        problem: RowProblem,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Why a single input row was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowProblem {
    #[error("empty text")]
    EmptyText,
    #[error("empty note_id")]
    EmptyId,
    #[error("query shorter than {min} characters ({len})")]
    QueryTooShort { len: usize, min: usize },
    #[error("{0}")]
    Syntax(String),
}

/// Failure reported by an external LLM or embedding service.
#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<ProviderError>,
    },
    #[error("expected {expected}-dimensional embedding, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("no replay fixture for prompt {0}")]
    MissingFixture(String),
}

impl ProviderError {
    /// Whether a retry has a chance of succeeding.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Transport(_) | ProviderError::Timeout => true,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over zero chunks")]
    EmptyCorpus,
    #[error("chunk {0} is not in the index")]
    UnknownChunk(usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cannot fuse: {0}")]
    ChannelMismatch(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("prompt needs at least one chunk")]
    NoChunks,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("timestamp {0} is not finite")]
    NonFiniteTime(f64),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("unknown funnel stage `{0}`")]
    StageMismatch(String),
    #[error("{0} annotation set is empty")]
    EmptySide(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Error)]
#[error("config: `{field}` {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Top-level pipeline error. Each variant maps onto one process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Provider(_) => 3,
            Error::Data(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Provider(_) => "provider",
            Error::Data(_) => "data",
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(DataError::Invalid(msg.into()))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Data(DataError::Io {
            path: path.into(),
            source,
        })
    }
}

impl From<RetrievalError> for Error {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Provider(p) => Error::Provider(p),
            other => Error::data(other.to_string()),
        }
    }
}

impl From<AnnotationError> for Error {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Provider(p) => Error::Provider(p),
            other => Error::data(other.to_string()),
        }
    }
}

impl From<TimelineError> for Error {
    fn from(e: TimelineError) -> Self {
        match e {
            TimelineError::BadFractions(_) => Error::Config(ConfigError::new("split.fractions", e.to_string())),
            other => Error::data(other.to_string()),
        }
    }
}

impl From<StatsError> for Error {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Provider(p) => Error::Provider(p),
            other => Error::data(other.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
