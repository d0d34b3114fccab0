use thiserror::Error;

use crate::raster::Units;

pub type Result<T> = std::result::Result<T, StarError>;

#[derive(Debug, Error)]
pub enum StarError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("unit error: {op} expects {expected}, got {found}")]
    Units {
        op: &'static str,
        expected: String,
        found: Units,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(
        "unsupported projection: source CRS {source_crs} differs from target CRS {target_crs}; \
         pre-project all inputs to one CRS before processing"
    )]
    UnsupportedProjection {
        source_crs: String,
        target_crs: String,
    },

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("no bimodal region: none of {examined} chessboard cells passed selection")]
    NoBimodalRegion { examined: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("ingest error in field `{field}`: {message}")]
    Ingest { field: String, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("step `{step}` failed for scene `{scene}`: {source}")]
    Step {
        step: String,
        scene: String,
        #[source]
        source: Box<StarError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StarError {
    pub fn param(msg: impl Into<String>) -> Self {
        StarError::Parameter(msg.into())
    }

    pub fn units(op: &'static str, expected: impl Into<String>, found: Units) -> Self {
        StarError::Units {
            op,
            expected: expected.into(),
            found,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 degenerate algorithm condition.
    pub fn exit_code(&self) -> i32 {
        match self {
            StarError::Config(_) | StarError::Parameter(_) => 2,
            StarError::DegenerateHistogram(_) | StarError::NoBimodalRegion { .. } => 4,
            StarError::Step { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
