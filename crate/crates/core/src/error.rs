use thiserror::Error;

/// Errors surfaced by the library. Messages are part of the contract and are
/// matched by callers (the CLI maps some of them onto exit codes).
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("tile exceeds slide")]
    TileExceedsSlide,
    #[error("dimension not divisible")]
    DimensionNotDivisible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty bag")]
    EmptyBag,
    #[error("degenerate labels")]
    DegenerateLabels,
    #[error("numerical failure")]
    NumericalFailure,
    #[error("insufficient instances")]
    InsufficientInstances,
    #[error("too many clusters: {clusters} requested for {points} points")]
    TooManyClusters { clusters: usize, points: usize },
    #[error("empty selection budget")]
    EmptySelectionBudget,
    #[error("no positives")]
    NoPositives,
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
