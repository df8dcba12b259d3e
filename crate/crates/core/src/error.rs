use std::path::PathBuf;

/// Errors produced anywhere in the benchmark pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {source_name} at row {row}: {message}")]
    Parse {
        source_name: String,
        row: usize,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("value {value} outside the valid {assay} range [{min}, {max}]")]
    Domain {
        assay: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("infeasible split for strategy {strategy}: {message}")]
    Infeasible { strategy: String, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite activation in layer {layer}")]
    Numeric { layer: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            row,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
