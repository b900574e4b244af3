use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preproc,
    Semseg,
    Instseg,
    Myelinmap,
    Morpho,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Preproc, Stage::Semseg, Stage::Instseg, Stage::Myelinmap, Stage::Morpho];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preproc => "preproc",
            Stage::Semseg => "semseg",
            Stage::Instseg => "instseg",
            Stage::Myelinmap => "myelinmap",
            Stage::Morpho => "morpho",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] axonvox_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("artifacts directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<PipelineError>,
    },

    #[error("edit rejected: {0}")]
    Edit(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub fn failed_stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
