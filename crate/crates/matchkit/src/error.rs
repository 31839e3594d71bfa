use thiserror::Error;

/// Crate-wide error type. Variants are grouped by pipeline stage so the CLI
/// can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("duplicate query id `{0}`")]
    DuplicateQueryId(String),

    #[error("duplicate run entry for query `{0}` doc `{1}`")]
    DuplicateRunEntry(String, String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("index format version mismatch: found {found}, expected {expected}")]
    IndexVersion { found: u32, expected: u32 },

    #[error("index file truncated or malformed: {0}")]
    IndexCorrupt(String),

    #[error("index checksum mismatch")]
    IndexChecksum,

    #[error("model checkpoint version mismatch: found {found}, expected {expected}")]
    ModelVersion { found: u32, expected: u32 },

    #[error("dimension mismatch: query dim {query} vs matrix dim {matrix}")]
    DimMismatch { query: usize, matrix: usize },

    #[error("degenerate query/document pair: {0}")]
    DegeneratePair(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no trainable parameters enabled")]
    NoTrainableParams,

    #[error("empty training data")]
    EmptyTrainingData,

    #[error("no titled documents in corpus")]
    NoTitledDocuments,

    #[error("no preference pairs derivable from qrels")]
    NoPreferencePairs,

    #[error("qrels contain no relevant documents for any query")]
    NoRelevantDocuments,

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
