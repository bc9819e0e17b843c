use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("unknown feature: {0}")]
    UnknownFeature(String),
    #[error("unknown row id: {0}")]
    UnknownRow(usize),
    #[error("at least one feature required")]
    NoFeatures,
    #[error("empty prediction")]
    EmptyPrediction,
    #[error("degenerate R² denominator")]
    DegenerateRsq,
    #[error("measure not decomposable: {0}")]
    NotDecomposable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("schema mismatch: missing features {}", .0.join(", "))]
    SchemaMismatch(Vec<String>),
    #[error("{0}")]
    IncompatibleSampler(String),
    #[error("{0}")]
    Inference(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
