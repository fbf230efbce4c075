use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Parsing errors carry the 1-based
/// line number of the offending input where one exists.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },

    #[error("line {line}: cannot parse `{token}` as a number")]
    BadNumber { line: usize, token: String },

    #[error("line {line}: non-finite value `{token}`")]
    NonFinite { line: usize, token: String },

    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("line {line}: expected {expected} feature values, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("class index {index} appears more than once")]
    DuplicateIndex { index: usize },

    #[error("class indices are not contiguous: index {missing} is missing")]
    IndexGap { missing: usize },

    #[error("line {line}: empty label")]
    EmptyLabel { line: usize },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("unknown synset `{0}`")]
    UnknownNode(String),

    #[error("taxonomy contains a cycle through `{0}`")]
    Cycle(String),

    #[error("taxonomy is empty")]
    EmptyTaxonomy,

    #[error("label {index} (`{label}`) has no synset id")]
    MissingSynset { index: usize, label: String },

    #[error("word `{0}` appears more than once in the embedding table")]
    DuplicateWord(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("neighbor selection is empty")]
    EmptySelection,

    #[error("prediction list is empty")]
    EmptyPredictions,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("similarity value {value} at ({row}, {col}) is outside [0, 1]")]
    SimilarityRange { row: usize, col: usize, value: f64 },

    #[error("source head reached macro F1 {reached:.4} after {attempts} attempts, below {required}")]
    SourceNotSeparable {
        reached: f64,
        required: f64,
        attempts: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
