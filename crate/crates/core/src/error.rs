use thiserror::Error;

/// Errors produced across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("voxel grid mismatch: {0}")]
    GridMismatch(String),
    #[error("empty isosurface")]
    EmptySurface,
    #[error("grasp lift failed: {0}")]
    Lift(String),
    #[error("no reachable grasp candidate")]
    NoGrasp,
    #[error("object placement failed after {0} attempts")]
    Placement(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
