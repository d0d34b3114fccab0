//! Data-cube layout, raster I/O, configuration, synthetic scenes and the
//! processing pipeline.

pub mod config;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use config::{PipelineConfig, Step};
pub use ingest::{ingest, BandKind, IngestRequest};
pub use manifest::{Cube, SceneBands, SceneManifest};
pub use pipeline::{report, run_pipeline, RunOutcome};
