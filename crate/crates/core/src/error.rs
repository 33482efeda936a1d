use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong across the crate.
///
/// [`Error::kind`] buckets variants into the three failure families the CLI maps
/// to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("crs mismatch: `{left}` vs `{right}`")]
    CrsMismatch { left: String, right: String },

    #[error("no projection known for crs `{0}`")]
    UnsupportedCrs(String),

    #[error("grids are not aligned: {0}")]
    Alignment(String),

    #[error("grid extents do not overlap")]
    Extent,

    #[error("no ocean seed cell intersects the grid")]
    NoSeed,

    #[error("feature layer `{0}` has no feature cells")]
    EmptyFeature(String),

    #[error("missing input layer for driver variable `{0}`")]
    MissingLayer(String),

    #[error("class {class} has {found} training cells, need at least {needed}")]
    InsufficientTraining {
        class: u8,
        found: usize,
        needed: usize,
    },

    #[error("covariance of class {0} is singular after regularization")]
    SingularCovariance(u8),

    #[error("cannot allocate {requested} sample points: {reason}")]
    Allocation { requested: usize, reason: String },

    #[error("assessment has no valid reference points")]
    EmptyAssessment,

    #[error("invalid sample point at row {row}, col {col}: {reason}")]
    InvalidPoint {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("{group} group has {found} eligible cells, need {needed}")]
    InsufficientSamples {
        group: &'static str,
        found: usize,
        needed: usize,
    },

    #[error("no transitions pass the threshold")]
    NoTransitions,

    #[error("training diverged at epoch {epoch} (non-finite loss); try a lower lr_start")]
    Divergence { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("catalog error: {0}")]
    Catalog(String),
}

/// Coarse failure family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::SingularCovariance(_) | Error::Divergence { .. } => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
