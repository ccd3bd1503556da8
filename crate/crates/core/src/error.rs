use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON error in {path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("schema error in {path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("duplicate report ids: {0:?}")]
    DuplicateIds(Vec<String>),
    #[error("unknown orientation `{0}`")]
    UnknownOrientation(String),
    #[error("unknown score kind `{0}`")]
    UnknownScoreKind(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least {required} observations, got {actual}")]
    TooFewObservations { required: usize, actual: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("k = {k} exceeds the {distinct} distinct rows")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("stratum `{stratum}` has {size} pairs, too few to split")]
    StratumTooSmall { stratum: String, size: usize },
    #[error("correlation triple ({r_jk}, {r_jh}, {r_kh}) is not positive semidefinite")]
    NotPositiveSemidefinite { r_jk: f64, r_jh: f64, r_kh: f64 },
    #[error("encoder `{0}` is not available")]
    EncoderUnavailable(String),
    #[error("encoder mismatch: checkpoint expects `{expected}`, got `{actual}`")]
    EncoderMismatch { expected: String, actual: String },
    #[error("token `{0}` is outside the encoder vocabulary")]
    UnknownToken(String),
    #[error("non-finite training loss at epoch {epoch}, batch {batch} (last finite loss {last_finite:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_finite: Option<f64>,
    },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown report id `{0}`")]
    UnknownReport(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable, missing or malformed inputs, as
    /// opposed to failures of the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv { .. }
                | Error::Json { .. }
                | Error::MissingColumn { .. }
                | Error::Schema { .. }
                | Error::DuplicateIds(_)
                | Error::Checkpoint(_)
                | Error::EncoderUnavailable(_)
        )
    }
}
