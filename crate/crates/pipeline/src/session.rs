//! A proofreading session over a finished run directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axonvox_core::instseg::AxonRecord;
use axonvox_core::{io, LabelVolume, Volume, Voxel};

use crate::artifacts::{self, Manifest};
use crate::config::PipelineConfig;
use crate::edits::{self, EditLog, EditOp, GrowContext, LogEntry, UndoRecord};
use crate::error::{PipelineError, Result};
use crate::stages;

/// Immutable view handed to readers; writers publish a new one.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub raw: Arc<Volume>,
    pub preprocessed: Arc<Volume>,
    pub semantic: Arc<LabelVolume>,
    pub axons: Arc<LabelVolume>,
    pub myelin_instances: Arc<LabelVolume>,
    pub records: Arc<Vec<AxonRecord>>,
    pub manifest: Arc<Manifest>,
    pub undo_depth: usize,
}

#[derive(Debug)]
pub struct Session {
    dir: PathBuf,
    cfg: PipelineConfig,
    log: EditLog,
    undo: Vec<UndoRecord>,
    barrier: Option<Arc<Vec<bool>>>,
    snap: Snapshot,
}

fn json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let b = std::fs::read(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
    Ok(serde_json::from_slice(&b)?)
}

impl Session {
    /// Load the artifacts of `dir`. An existing edit log is replayed from the
    /// automatic segmentation and must reproduce the saved labels.
    pub fn open(dir: &Path) -> Result<Self> {
        let cfg = PipelineConfig::load(&dir.join(artifacts::CONFIG))?;
        let manifest = Manifest::load(dir)?;
        if let Some(stage) = manifest.failed_stage {
            return Err(PipelineError::Config(format!(
                "run in {} failed at stage {stage}",
                dir.display()
            )));
        }
        let raw = io::load_volume(&dir.join(artifacts::RAW))?;
        let preprocessed = io::load_volume(&dir.join(artifacts::PREPROCESSED))?;
        let semantic = io::load_labels(&dir.join(artifacts::SEMANTIC))?;
        let axons = io::load_labels(&dir.join(artifacts::AXONS))?;
        let myelin_instances = io::load_labels(&dir.join(artifacts::MYELIN_INSTANCES))?;
        let records: Vec<AxonRecord> = json(&dir.join(artifacts::AXON_RECORDS))?;
        let log = EditLog::new(dir.join(artifacts::EDIT_LOG));
        let mut s = Session {
            dir: dir.to_path_buf(),
            cfg,
            log,
            undo: Vec::new(),
            barrier: None,
            snap: Snapshot {
                version: 0,
                raw: Arc::new(raw),
                preprocessed: Arc::new(preprocessed),
                semantic: Arc::new(semantic),
                axons: Arc::new(axons),
                myelin_instances: Arc::new(myelin_instances),
                records: Arc::new(records),
                manifest: Arc::new(manifest),
                undo_depth: 0,
            },
        };
        let entries = s.log.read()?;
        if !entries.is_empty() {
            let mut base = io::load_labels(&dir.join(artifacts::AXONS_AUTO))?;
            let needs_grow = entries.iter().any(|e| matches!(e, LogEntry::Seeds { .. }));
            let barrier = if needs_grow { Some(s.barrier()?) } else { None };
            let ctx = barrier.as_ref().map(|b| GrowContext {
                volume: &s.snap.preprocessed,
                myelin: &s.snap.semantic,
                barrier: b,
                params: stages::bvg_params(&s.cfg),
            });
            s.undo = edits::replay(&mut base, &entries, ctx.as_ref())?;
            if base != *s.snap.axons {
                return Err(PipelineError::Edit(
                    "edit log does not reproduce the saved axon labels".into(),
                ));
            }
            s.snap.undo_depth = s.undo.len();
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snap.clone()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn barrier(&mut self) -> Result<Arc<Vec<bool>>> {
        if self.barrier.is_none() {
            let b = stages::barrier(&self.cfg, &self.snap.preprocessed, &self.snap.semantic)?;
            self.barrier = Some(Arc::new(b));
        }
        Ok(self.barrier.clone().unwrap())
    }

    fn publish(&mut self, axons: LabelVolume, entry: &LogEntry) -> Result<()> {
        let auto = self.dir.join(artifacts::AXONS_AUTO);
        if !auto.exists() {
            io::save_labels(&self.snap.axons, &auto)?;
        }
        let mi = stages::myelin_map(&axons, &self.snap.semantic)?;
        self.log.append(entry)?;
        io::save_labels(&axons, &self.dir.join(artifacts::AXONS))?;
        io::save_labels(&mi.labels, &self.dir.join(artifacts::MYELIN_INSTANCES))?;
        self.snap.axons = Arc::new(axons);
        self.snap.myelin_instances = Arc::new(mi.labels);
        self.snap.version += 1;
        self.snap.undo_depth = self.undo.len();
        Ok(())
    }

    pub fn apply(&mut self, op: EditOp) -> Result<UndoRecord> {
        let mut axons = (*self.snap.axons).clone();
        let undo = edits::apply_edit(&mut axons, &op)?;
        self.undo.push(undo.clone());
        if let Err(e) = self.publish(axons, &LogEntry::Edit { op }) {
            self.undo.pop();
            return Err(e);
        }
        Ok(undo)
    }

    /// Grow new axons from manual seeds; a seed on myelin rejects the request.
    pub fn grow(&mut self, seeds: Vec<Voxel>, author: String, timestamp: String) -> Result<Vec<AxonRecord>> {
        let dims = self.snap.axons.dims;
        for s in &seeds {
            let i = s.index_in(dims)?;
            if self.snap.semantic.labels[i] != 0 {
                return Err(PipelineError::Edit(format!("seed ({}, {}, {}) lies on myelin", s.x, s.y, s.z)));
            }
        }
        let barrier = self.barrier()?;
        let mut axons = (*self.snap.axons).clone();
        let ctx = GrowContext {
            volume: &self.snap.preprocessed,
            myelin: &self.snap.semantic,
            barrier: &barrier,
            params: stages::bvg_params(&self.cfg),
        };
        let (undo, recs) = edits::grow_seeds(&mut axons, &ctx, &seeds)?;
        self.undo.push(undo);
        let entry = LogEntry::Seeds {
            seeds,
            author,
            timestamp,
        };
        if let Err(e) = self.publish(axons, &entry) {
            self.undo.pop();
            return Err(e);
        }
        let mut all = (*self.snap.records).clone();
        all.extend(recs.iter().cloned());
        self.snap.records = Arc::new(all);
        Ok(recs)
    }

    pub fn undo(&mut self, author: String, timestamp: String) -> Result<()> {
        let rec = self
            .undo
            .pop()
            .ok_or_else(|| PipelineError::Edit("nothing to undo".into()))?;
        let mut axons = (*self.snap.axons).clone();
        rec.apply(&mut axons);
        if let Err(e) = self.publish(axons, &LogEntry::Undo { author, timestamp }) {
            self.undo.push(rec);
            return Err(e);
        }
        Ok(())
    }
}
