//! End-to-end run with persisted artifacts and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use axonvox_core::instseg::AxonRecord;
use axonvox_core::morpho::{self, AxonMorphometry, AxonOutcome, CrossSectionRecord};
use axonvox_core::{io, LabelVolume, Volume};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, Manifest, RunLock, Seeds, StageTiming};
use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result, Stage};
use crate::stages;

/// In-memory results of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub preprocessed: Volume,
    pub semantic: LabelVolume,
    pub axons: LabelVolume,
    pub myelin_instances: LabelVolume,
    pub records: Vec<AxonRecord>,
    pub candidates: Vec<AxonRecord>,
    pub outcomes: Vec<AxonOutcome>,
    pub manifest: Manifest,
}

/// Contents of `morphometry.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryFile {
    pub g_ratio_convention: String,
    pub length_threshold_um: f64,
    pub axons: Vec<AxonOutcome>,
}

pub fn split_outcomes(outcomes: &[AxonOutcome]) -> (Vec<AxonMorphometry>, Vec<CrossSectionRecord>) {
    let mut summary = Vec::new();
    let mut sections = Vec::new();
    for o in outcomes {
        if let AxonOutcome::Measured { summary: s, sections: rows } = o {
            summary.push(*s);
            sections.extend_from_slice(rows);
        }
    }
    (summary, sections)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(path.to_path_buf(), e)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    artifacts::write_atomic(&dir.join(name), &serde_json::to_vec_pretty(value)?)
}

pub fn write_morphometry(dir: &Path, cfg: &PipelineConfig, outcomes: &[AxonOutcome]) -> Result<()> {
    let (summary, sections) = split_outcomes(outcomes);
    let mut buf = Vec::new();
    morpho::write_sections_csv(&mut buf, &sections)?;
    artifacts::write_atomic(&dir.join(artifacts::SECTIONS_CSV), &buf)?;
    let mut buf = Vec::new();
    morpho::write_summary_csv(&mut buf, &summary)?;
    artifacts::write_atomic(&dir.join(artifacts::SUMMARY_CSV), &buf)?;
    write_json(
        dir,
        artifacts::MORPHOMETRY,
        &MorphometryFile {
            g_ratio_convention: morpho::G_RATIO_CONVENTION.to_string(),
            length_threshold_um: cfg.morpho.length_threshold_um,
            axons: outcomes.to_vec(),
        },
    )
}

struct Recorder<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Recorder<'_> {
    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        info!("stage {stage} started");
        let t0 = Instant::now();
        let r = f();
        let seconds = t0.elapsed().as_secs_f64();
        self.manifest.stages.push(StageTiming {
            stage,
            seconds,
            ok: r.is_ok(),
        });
        match r {
            Ok(v) => {
                info!("stage {stage} done in {seconds:.2} s");
                for name in artifacts::stage_outputs(stage) {
                    for file in artifacts::hashed_files(name) {
                        let h = artifacts::sha256_file(&self.dir.join(&file)).map_err(|e| self.fail(stage, e))?;
                        self.manifest.outputs.insert(file, h);
                    }
                }
                Ok(v)
            }
            Err(e) => Err(self.fail(stage, e)),
        }
    }

    fn fail(&mut self, stage: Stage, e: PipelineError) -> PipelineError {
        self.manifest.failed_stage = Some(stage);
        self.manifest.error = Some(e.to_string());
        if let Err(me) = self.manifest.save(self.dir) {
            warn!("could not write manifest: {me}");
        }
        PipelineError::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

/// Run every stage on `input`, persisting each stage's artifacts into `dir`
/// before the next starts. A failing stage is named in the error and in the
/// manifest; artifacts of earlier stages stay on disk.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Volume, dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let _lock = RunLock::acquire(dir)?;
    let warnings = cfg.fixed_overrides();
    for w in &warnings {
        warn!("{w}");
    }
    artifacts::write_atomic(&dir.join(artifacts::CONFIG), cfg.to_toml().as_bytes())?;
    let _ = fs::remove_file(dir.join(artifacts::EDIT_LOG));
    let _ = fs::remove_file(dir.join(artifacts::AXONS_AUTO));
    let _ = fs::remove_file(dir.join(artifacts::AXONS_AUTO.replace(".json", ".raw")));
    let mut rec = Recorder {
        dir,
        manifest: Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            input_hash: artifacts::volume_hash(input),
            seeds: Seeds {
                run: cfg.run.seed,
                srg: cfg.srg_seed(),
                forest: cfg.forest_seed(),
            },
            threads: rayon::current_num_threads(),
            stages: Vec::new(),
            outputs: BTreeMap::new(),
            warnings,
            g_ratio_convention: morpho::G_RATIO_CONVENTION.to_string(),
            n_candidates: 0,
            n_axons: 0,
            n_measured: 0,
            failed_stage: None,
            error: None,
        },
    };

    let pre = rec.stage(Stage::Preproc, || {
        io::save_volume(input, &dir.join(artifacts::RAW))?;
        let v = stages::preprocess(&cfg.preproc, input)?;
        io::save_volume(&v, &dir.join(artifacts::PREPROCESSED))?;
        Ok(v)
    })?;
    let semantic = rec.stage(Stage::Semseg, || {
        let m = stages::semantic(cfg, &pre)?;
        io::save_labels(&m, &dir.join(artifacts::SEMANTIC))?;
        Ok(m)
    })?;
    let inst = rec.stage(Stage::Instseg, || {
        let r = stages::instances(cfg, &pre, &semantic)?;
        io::save_labels(&r.axons, &dir.join(artifacts::AXONS))?;
        write_json(dir, artifacts::AXON_RECORDS, &r.records)?;
        write_json(dir, artifacts::CANDIDATES, &r.candidates)?;
        Ok(r)
    })?;
    rec.manifest.n_candidates = inst.candidates.len();
    rec.manifest.n_axons = inst.records.len();
    let mi = rec.stage(Stage::Myelinmap, || {
        let m = stages::myelin_map(&inst.axons, &semantic)?;
        io::save_labels(&m.labels, &dir.join(artifacts::MYELIN_INSTANCES))?;
        Ok(m)
    })?;
    for (id, n) in &mi.far_voxels {
        rec.manifest
            .warnings
            .push(format!("axon {id}: {n} myelin voxels assigned farther than 2 um"));
    }
    let outcomes = rec.stage(Stage::Morpho, || {
        let o = stages::morphometry(cfg, &inst.axons, &mi.labels)?;
        write_morphometry(dir, cfg, &o)?;
        Ok(o)
    })?;
    rec.manifest.n_measured = outcomes
        .iter()
        .filter(|o| matches!(o, AxonOutcome::Measured { .. }))
        .count();
    rec.manifest.save(dir)?;
    Ok(RunOutput {
        preprocessed: pre,
        semantic,
        axons: inst.axons,
        myelin_instances: mi.labels,
        records: inst.records,
        candidates: inst.candidates,
        outcomes,
        manifest: rec.manifest,
    })
}
