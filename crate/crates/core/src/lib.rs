//! Cross-chunk registration, tracklet association and trajectory fusion for
//! chunked 4D reconstruction.

pub mod association;
pub mod chunker;
pub mod config;
pub mod error;
pub mod fusion;
pub mod hungarian;
pub mod io;
pub mod metrics;
pub mod model;
pub mod registration;
pub mod synthetic;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use model::{Chunk, FramePrediction, Pose, SimilarityTransform, Tracklet};
