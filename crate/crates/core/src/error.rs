use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("ray direction is not unit length (|d| = {0})")]
    InvalidDirection(f64),
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("no surface visible to the probe")]
    NoVisibleSurface,
    #[error("no point survives the visibility intersection across shifts")]
    EmptyIntersection,
    #[error("level mask contains no points")]
    EmptyLevel,
    #[error("modality `{0}` has no points")]
    EmptyModality(&'static str),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("fewer than 6 non-zero pairs ({0})")]
    InsufficientPairs(usize),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("too few samples to split ({0}, need at least 5)")]
    TooFewSamples(usize),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
