//! File layout of a run directory, the manifest and the run lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use axonvox_core::Volume;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result, Stage};

pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".axonvox.lock";
pub const RAW: &str = "raw.json";
pub const PREPROCESSED: &str = "preprocessed.json";
pub const SEMANTIC: &str = "semantic.json";
pub const AXONS: &str = "axons.json";
pub const MYELIN_INSTANCES: &str = "myelin_instances.json";
pub const AXON_RECORDS: &str = "axon_records.json";
pub const CANDIDATES: &str = "candidates.json";
pub const SECTIONS_CSV: &str = "morpho_sections.csv";
pub const SUMMARY_CSV: &str = "morpho_summary.csv";
pub const MORPHOMETRY: &str = "morphometry.json";
pub const EDIT_LOG: &str = "edits.jsonl";
pub const AXONS_AUTO: &str = "axons_auto.json";

/// Artifacts each stage persists, in the order they are written.
pub fn stage_outputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Preproc => &[RAW, PREPROCESSED],
        Stage::Semseg => &[SEMANTIC],
        Stage::Instseg => &[AXONS, AXON_RECORDS, CANDIDATES],
        Stage::Myelinmap => &[MYELIN_INSTANCES],
        Stage::Morpho => &[SECTIONS_CSV, SUMMARY_CSV, MORPHOMETRY],
    }
}

/// Files hashed into the manifest; volumes contribute header and payload.
pub fn hashed_files(name: &str) -> Vec<String> {
    if let Some(stem) = name.strip_suffix(".json") {
        if [RAW, PREPROCESSED, SEMANTIC, AXONS, MYELIN_INSTANCES, AXONS_AUTO].contains(&name) {
            return vec![name.to_string(), format!("{stem}.raw")];
        }
    }
    vec![name.to_string()]
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of dims, voxel size and intensities.
pub fn volume_hash(v: &Volume) -> String {
    let mut h = Sha256::new();
    for d in v.dims.to_array() {
        h.update((d as u64).to_le_bytes());
    }
    for s in v.voxel_size.to_array() {
        h.update(s.to_le_bytes());
    }
    for x in &v.data {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub srg: u64,
    pub forest: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub input_hash: String,
    pub seeds: Seeds,
    pub threads: usize,
    pub stages: Vec<StageTiming>,
    /// file name → SHA-256
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub g_ratio_convention: String,
    pub n_candidates: usize,
    pub n_axons: usize,
    pub n_measured: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let bytes = fs::read(&p).map_err(|e| PipelineError::Io(p.clone(), e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST), &serde_json::to_vec_pretty(self)?)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| PipelineError::Io(tmp.clone(), e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(dir.to_path_buf())),
            Err(e) => Err(PipelineError::Io(path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
