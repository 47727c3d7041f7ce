use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },

    #[error("{path}: duplicate sentence id {id} at row {row}")]
    DuplicateId { path: String, id: String, row: usize },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    BadCell {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: malformed input at row {row}: {message}")]
    Malformed { path: String, row: usize, message: String },

    #[error("annotation value {value} at row {row}, column {column} is not one of 0, 0.5, 1")]
    AnnotationDomain { row: usize, column: usize, value: f64 },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mapping: {0}")]
    InvalidMapping(String),

    #[error("gold and predictions share no sentence ids")]
    EmptyIntersection,

    #[error("unknown sentence id {0} in manifest")]
    UnknownId(String),

    #[error("in-gate evaluation has no gate-passing rows")]
    EmptyGate,

    #[error("refusing to tune thresholds on the test split")]
    TuneOnTest,

    #[error("missing stage input: {0}")]
    MissingStage(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingColumn { .. } => "missing-column",
            Error::DuplicateId { .. } => "duplicate-id",
            Error::BadCell { .. } => "bad-cell",
            Error::Malformed { .. } => "malformed",
            Error::AnnotationDomain { .. } => "annotation-domain",
            Error::VocabularyMismatch(_) => "vocabulary-mismatch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::InvalidMapping(_) => "invalid-mapping",
            Error::EmptyIntersection => "empty-intersection",
            Error::UnknownId(_) => "unknown-id",
            Error::EmptyGate => "empty-gate",
            Error::TuneOnTest => "tune-on-test",
            Error::MissingStage(_) => "missing-stage",
            Error::InvalidHierarchy(_) => "invalid-hierarchy",
            Error::InvalidEnsemble(_) => "invalid-ensemble",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Json(_) => "json",
        }
    }
}
