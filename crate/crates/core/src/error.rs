use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),

    #[error("no documents found in {0}")]
    NoDocuments(PathBuf),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("misaligned document: {ocr_len} vs {gt_len} characters")]
    Misaligned { ocr_len: usize, gt_len: usize },

    #[error("undefined rate: {0}")]
    UndefinedRate(&'static str),

    #[error("no aligned documents")]
    NoAlignedDocuments,

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("empty vocabulary intersection")]
    EmptyIntersection,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate word `{0}`")]
    DuplicateWord(String),

    #[error("word `{0}` missing from embedding")]
    MissingWord(String),

    #[error("mismatched curves: {0}")]
    MismatchedCurves(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

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

    /// Process exit code for the command line: 2 for bad input or
    /// configuration, 3 for a missing upstream artifact, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingDirectory(_)
            | Error::NoDocuments(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidNoise(_)
            | Error::InvalidParameter(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::MissingArtifact(_) => 3,
            _ => 1,
        }
    }
}
