use thiserror::Error;

/// Errors produced by the mapping, information and exploration routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("free-class probability is zero, log-odds pivot undefined")]
    DegeneratePivot,
    #[error("invalid class id {class} (expected 1..={max})")]
    InvalidClass { class: usize, max: usize },
    #[error("class count mismatch: expected K={expected}, got K={got}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("invalid log-odds vector: {0}")]
    InvalidLogOdds(String),
    #[error("invalid sensor parameters: {0}")]
    InvalidParams(String),
    #[error("ray origin lies outside the map bounds")]
    OriginOutOfBounds,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("ray has no cells")]
    EmptyRay,
    #[error("instance exceeds oracle scale (N={cells}, K={classes}; limits N<=8, K<=3)")]
    ScaleExceeded { cells: usize, classes: usize },
    #[error("no frontiers left")]
    NoFrontiers,
    #[error("goal unreachable")]
    Unreachable,
    #[error("no frontier is reachable")]
    AllUnreachable,
    #[error("pose lies inside an obstacle")]
    PoseInObstacle,
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
