use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument {value} is outside the domain ({domain})")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{0}: input must not be empty")]
    Empty(&'static str),

    #[error("schema error: missing column \"{column}\"")]
    MissingColumn { column: String },

    #[error("row {row}, column \"{column}\": cannot parse {value:?} ({reason})")]
    Parse {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },

    #[error("row {row}, column \"{column}\": missing value")]
    MissingValue { row: usize, column: String },

    #[error("requested {requested} rows but only {available} are available")]
    Size { requested: usize, available: usize },

    #[error("column \"{column}\": level {level:?} is not in the encoding plan")]
    UnseenLevel { column: String, level: String },

    #[error("response label {label:?} is not one of the observed labels {observed:?}")]
    Label {
        label: String,
        observed: Vec<String>,
    },

    #[error("unknown feature column \"{0}\"")]
    UnknownFeature(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("family mismatch: {0}")]
    Family(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initialization failed: no finite log-posterior after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error(
        "{divergent} of {total} post-warmup transitions diverged ({:.1}%), chains {chains:?}",
        100.0 * *divergent as f64 / *total as f64
    )]
    Divergence {
        divergent: usize,
        total: usize,
        chains: Vec<usize>,
    },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
