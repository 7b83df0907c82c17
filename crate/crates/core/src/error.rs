use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("label {0} has no samples")]
    DegenerateClass(i64),

    #[error("unknown label {0}")]
    UnknownLabel(i64),

    #[error("intervention y_hat = {y_hat} has no support in the observational data")]
    EmptySupport { y_hat: f64 },

    #[error("resample step m = {m}: {source}")]
    AtIntervention {
        m: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ill-posed oracle: {0}")]
    IllPosedOracle(String),

    #[error("IDX format error in {path}: expected magic {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("IDX length error in {path}: {detail}")]
    IdxLength { path: PathBuf, detail: String },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("image bank has no images for digit {0}")]
    DegenerateBank(u8),

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("decision boundary is vertical in x2 (w1 = 0)")]
    VerticalBoundary,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing MNIST files in {dir}: expected {expected}")]
    MissingMnist { dir: PathBuf, expected: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (flags, config, file schema)
    /// as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::KindMismatch(_)
                | Error::Schema(_)
                | Error::Config(_)
                | Error::LengthMismatch(_)
                | Error::MissingMnist { .. }
        )
    }
}
