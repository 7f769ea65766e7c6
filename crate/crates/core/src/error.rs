use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("record {id:?}: label/generator inconsistency ({label} with generator {generator})")]
    LabelGenerator {
        id: String,
        label: String,
        generator: String,
    },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("image error: {0}")]
    Image(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    #[error("extraction failed for {} sample(s): {}", .0.len(), format_failures(.0))]
    Extraction(Vec<(String, String)>),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}

fn format_failures(failures: &[(String, String)]) -> String {
    failures
        .iter()
        .map(|(id, why)| format!("{id}: {why}"))
        .collect::<Vec<_>>()
        .join("; ")
}
