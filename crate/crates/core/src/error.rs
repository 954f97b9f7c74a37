use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate record `{0}`")]
    DuplicateRecord(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown record ids: {}", .0.join(", "))]
    UnknownRecords(Vec<String>),

    #[error("record `{0}` has no label")]
    MissingLabel(String),

    #[error("record `{0}` is absent from the prediction")]
    MissingFromPrediction(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient sample: {0} rows, at least 2 required")]
    InsufficientSample(usize),

    #[error("zero denominator mean for `{0}`")]
    ZeroDenominator(String),

    #[error("homogeneity undefined: the true clustering has zero entropy")]
    HomogeneityUndefined,

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("{0}")]
    Qc(String),

    #[error("lease conflict on task `{task}`: held by `{holder}`")]
    LeaseConflict { task: String, holder: String },

    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("overlapping benchmark clusters: {}", .0.join("; "))]
    OverlapConflict(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than by the runtime.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
