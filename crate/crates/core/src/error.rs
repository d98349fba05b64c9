use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle {0} rad is too close to pi for the logarithm map")]
    AngleNearPi(f64),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxelSize(f64),
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),
    #[error("backward pass called without a forward cache: {0}")]
    MissingCache(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: u64, detail: String },
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("dimension mismatch for {entry}: {detail}")]
    DimensionMismatch { entry: String, detail: String },
    #[error("timestamp gap: {0}")]
    TimestampGap(String),
    #[error("camera name mismatch: {0}")]
    NameMismatch(String),
    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),
    #[error("missing checkpoint: {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// I/O failure on `path`; not-found becomes [`Error::MissingFile`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path);
        }
        Error::Io { path, source }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
