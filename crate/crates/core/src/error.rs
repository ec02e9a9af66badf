use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("FASTA parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no k-mers survive min_count={min_count} (k={k})")]
    EmptyDictionary { k: usize, min_count: u64 },

    #[error("no clean {k}-mer windows in corpus")]
    NoKmers { k: usize },

    #[error("feature space mismatch: model expects {expected_cols} columns (dictionary {expected_hash}), data has {found_cols} columns (dictionary {found_hash})")]
    FeatureSpaceMismatch {
        expected_cols: usize,
        expected_hash: String,
        found_cols: usize,
        found_hash: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{0}")]
    Training(String),

    #[error("model has {active} active features; exact SHAP supports at most {max}, use the tree engine instead")]
    TooManyFeatures { active: usize, max: usize },

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
