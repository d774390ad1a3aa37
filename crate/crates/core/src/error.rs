use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({:.6}, {:.6}, {:.6}) lies outside the field domain", .0[0], .0[1], .0[2])]
    OutOfDomain([f64; 3]),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("grid data file holds {actual} bytes, expected {expected} bytes")]
    DataSize { expected: usize, actual: usize },

    #[error("invalid block sequence on line {line}: {reason}")]
    Sequence { line: usize, reason: String },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss became non-finite ({loss}) at iteration {iteration}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("stationary flow did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown network kind `{0}`")]
    UnknownKind(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad input rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidField(_)
                | Error::DataSize { .. }
                | Error::Sequence { .. }
                | Error::Config(_)
                | Error::UnknownKind(_)
                | Error::Provenance(_)
                | Error::Shape(_)
                | Error::EmptyCorpus
        )
    }

    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.display().to_string(),
            source,
        }
    }
}
