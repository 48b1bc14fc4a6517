use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A log line that does not match CLF/Combined, with the first field that failed.
    #[error("malformed log line (field `{field}`): {line}")]
    ParseLine { field: &'static str, line: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// FCM singularity: a point sits on more than one identical center.
    #[error("degenerate cluster centers: {0}")]
    DegenerateCenters(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
