use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {row}: self-loop on vertex {vertex}")]
    SelfLoop { row: usize, vertex: String },

    #[error("adjacency matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },

    #[error("row {row}, column {col}: entry {value:?} is not 0 or 1")]
    NonBinary {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("dense adjacency matrix must be square, row {row} has {found} entries but {expected} were expected")]
    NotSquare {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("vertex {vertex} has block label {label} outside 0..{k}")]
    InvalidAssignment {
        vertex: usize,
        label: usize,
        k: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("every log-weight is -inf")]
    AllNegInfinite,

    #[error("unknown scenario {name:?}, known scenarios: {known}")]
    UnknownScenario { name: String, known: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::AllNegInfinite)
    }
}
