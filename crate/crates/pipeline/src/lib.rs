//! Orchestration of the segmentation and morphometry pipeline, proofreading
//! edits and label surface meshes.

pub mod artifacts;
pub mod config;
pub mod edits;
pub mod error;
pub mod eval;
pub mod mesh;
pub mod run;
pub mod session;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result, Stage};
pub use run::{run_pipeline, RunOutput};
