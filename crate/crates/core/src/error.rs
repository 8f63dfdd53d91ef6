use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0} is empty")]
    EmptyInput(String),

    #[error("cache format mismatch: {0}")]
    CacheVersion(String),

    #[error("zero-norm vector for token {token:?}")]
    ZeroNorm { token: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("word {word} is out of vocabulary")]
    OutOfVocabulary { word: String },

    #[error("neighbour {neighbour} is not in the neighbourhood of word {word}")]
    NotANeighbour { word: usize, neighbour: usize },

    #[error("non-finite reconstruction error while fitting word {word:?}")]
    NonFinite { word: String },

    #[error("singular reconstruction system for word {word:?}")]
    Singular { word: String },

    #[error("eigensolver did not converge: max residual {max_residual:e} after {restarts} restarts")]
    NoConvergence { max_residual: f64, restarts: usize },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Name of the pipeline stage that produced this error, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyInput(_) => "empty_input",
            Error::CacheVersion(_) => "cache_version",
            Error::ZeroNorm { .. } => "zero_norm",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OutOfVocabulary { .. } => "out_of_vocabulary",
            Error::NotANeighbour { .. } => "not_a_neighbour",
            Error::NonFinite { .. } => "non_finite",
            Error::Singular { .. } => "singular",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Undefined(_) => "undefined",
            Error::Stage { source, .. } => source.kind(),
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
