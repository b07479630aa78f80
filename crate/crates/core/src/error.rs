use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed capture: {0}")]
    MalformedCapture(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A field that failed to parse; `line` is 1-based and counts the header.
    #[error("line {line}: {msg}")]
    Value { line: usize, msg: String },

    /// Syntax error in one of the line-oriented text formats.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("flow {0} has no packets")]
    EmptyFlow(u64),

    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("flow {0} has no app label")]
    Unlabeled(u64),

    #[error("app {app}: {flows} flows left for clustering, need at least {need}")]
    AppTooSmall { app: String, flows: usize, need: usize },

    #[error("label {label} has {count} flows, need at least {need}")]
    LabelTooSmall { label: String, count: usize, need: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("test set is empty")]
    EmptyTest,

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the underlying file system rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
