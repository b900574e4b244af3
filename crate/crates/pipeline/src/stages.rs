//! The five pipeline stages as pure functions of their inputs.

use std::collections::BTreeMap;
use std::path::Path;

use axonvox_core::instseg::{
    self, AxonRecord, BvgParams, SeedOrigin, SupervoxelMap,
};
use axonvox_core::morpho::{self, AxonOutcome, MorphoParams};
use axonvox_core::myelinmap::{self, MyelinInstances};
use axonvox_core::semseg::{self, ForestParams};
use axonvox_core::volume::FIRST_INSTANCE;
use axonvox_core::{preproc, LabelKind, LabelVolume, Volume, Voxel};
use log::{info, warn};

use crate::config::{PipelineConfig, PreprocConfig, SeedSource, SemsegMethod};
use crate::error::{PipelineError, Result};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))
}

pub fn preprocess(cfg: &PreprocConfig, v: &Volume) -> Result<Volume> {
    let v = if cfg.normalize_contrast {
        preproc::normalize_contrast(v)
    } else {
        v.clone()
    };
    Ok(preproc::denoise(&v, &cfg.denoise)?)
}

/// Semantic myelin mask, small components removed.
pub fn semantic(cfg: &PipelineConfig, v: &Volume) -> Result<LabelVolume> {
    let s = &cfg.semseg;
    let mask = match s.method {
        SemsegMethod::Threshold => semseg::threshold_myelin(v, s.threshold as f32)?,
        SemsegMethod::Srg => {
            let seeds = semseg::auto_seeds(v, s.srg_seed_mode, s.srg_n_seeds, cfg.srg_seed())?;
            semseg::srg_myelin(v, &seeds, s.srg_tolerance as f32)?
        }
        SemsegMethod::Forest => {
            let path = s
                .scribbles
                .as_deref()
                .ok_or_else(|| PipelineError::Config("forest method needs scribbles".into()))?;
            let scribbles = semseg::parse_scribbles(&read_file(path)?)?;
            let f = semseg::compute_features_with(v, &s.feature_sigmas);
            let p = ForestParams {
                n_trees: s.n_trees,
                max_depth: s.max_depth,
                rng_seed: cfg.forest_seed(),
            };
            let model = semseg::train_forest(&f, &scribbles, &p)?;
            semseg::predict_forest(&model, &f, v.voxel_size)?
        }
    };
    Ok(semseg::remove_small_components(&mask, s.myelin_min_volume))
}

/// Result of instance segmentation.
#[derive(Debug, Clone)]
pub struct Instances {
    /// Myelinated axons, renumbered from `FIRST_INSTANCE` in candidate order.
    pub axons: LabelVolume,
    pub records: Vec<AxonRecord>,
    /// Every grown region after refinement, in candidate numbering.
    pub candidates: Vec<AxonRecord>,
    pub n_seeds: usize,
    pub n_supervoxels: usize,
    pub fragments_merged: usize,
}

pub fn bvg_params(cfg: &PipelineConfig) -> BvgParams {
    let i = &cfg.instseg;
    BvgParams {
        similarity_threshold: i.similarity_threshold,
        min_volume: i.min_volume,
        max_volume: i.max_volume,
        connectivity: 6,
        canny: i.canny,
    }
}

/// Seeds in growth order and their origin tag.
pub fn seeds(cfg: &PipelineConfig, myelin: &LabelVolume) -> Result<(Vec<Voxel>, SeedOrigin)> {
    let i = &cfg.instseg;
    Ok(match i.seeds {
        SeedSource::Maxima => (
            instseg::seeds_regional_maxima(&instseg::edt2d_stack(myelin)),
            SeedOrigin::Maxima,
        ),
        SeedSource::Watershed => (
            instseg::seeds_watershed_centroids(&instseg::edt2d_stack(myelin), i.h),
            SeedOrigin::Watershed,
        ),
        SeedSource::File => {
            let path = i
                .seeds_file
                .as_deref()
                .ok_or_else(|| PipelineError::Config("seeds = \"file\" needs seeds_file".into()))?;
            (semseg::parse_seeds(&read_file(path)?)?, SeedOrigin::File)
        }
    })
}

/// Growth barrier: Canny edges not on or beside myelin.
pub fn barrier(cfg: &PipelineConfig, v: &Volume, myelin: &LabelVolume) -> Result<Vec<bool>> {
    let edges = instseg::canny3d_stack(v, &cfg.instseg.canny)?;
    Ok(instseg::edge_barrier(&edges, myelin))
}

pub fn instances(cfg: &PipelineConfig, v: &Volume, myelin: &LabelVolume) -> Result<Instances> {
    let i = &cfg.instseg;
    let (seed_list, origin) = seeds(cfg, myelin)?;
    let barrier = barrier(cfg, v, myelin)?;
    let mut labels = v.empty_labels(LabelKind::AxonInstance);
    let grown = instseg::bvg_into(&mut labels, v, myelin, &barrier, &seed_list, origin, &bvg_params(cfg))?;
    info!("bvg: {} seeds, {} regions", seed_list.len(), grown.len());
    if grown.is_empty() {
        return Ok(Instances {
            axons: labels,
            records: Vec::new(),
            candidates: Vec::new(),
            n_seeds: seed_list.len(),
            n_supervoxels: 0,
            fragments_merged: 0,
        });
    }
    let sv = instseg::slic_supervoxels(v, i.slic_target_size, i.slic_compactness)?;
    let mut fragments_merged = 0;
    if i.refine {
        let mut r = instseg::refine_with_supervoxels(&labels, &sv, i.overlap, i.big_threshold)?;
        fragments_merged = instseg::merge_fragments(&mut r, i.min_fragment);
        labels = r.labels;
    }
    // supervoxels may straddle the myelin wall
    for (l, &m) in labels.labels.iter_mut().zip(&myelin.labels) {
        if m != 0 {
            *l = 0;
        }
    }
    let counts = labels.histogram();
    let mut candidates = Vec::new();
    for rec in &grown {
        let n = counts.get(&rec.label).copied().unwrap_or(0);
        if n < i.min_volume {
            continue;
        }
        candidates.push(AxonRecord {
            voxel_count: n,
            ..rec.clone()
        });
    }
    let keep: BTreeMap<u32, ()> = candidates.iter().map(|r| (r.label, ())).collect();
    for l in labels.labels.iter_mut() {
        if *l != 0 && !keep.contains_key(l) {
            *l = 0;
        }
    }
    let tests = instseg::myelination_all(&labels, &sv, myelin, i.myelinated_fraction)?;
    let mut renumber = BTreeMap::new();
    let mut records = Vec::new();
    for c in candidates.iter_mut() {
        let (ok, f) = tests.get(&c.label).copied().unwrap_or((false, 0.0));
        c.myelinated = ok;
        c.myelin_fraction = f;
        if ok {
            let id = FIRST_INSTANCE + records.len() as u32;
            renumber.insert(c.label, id);
            records.push(AxonRecord { label: id, ..c.clone() });
            if c.flagged {
                warn!("axon {id} reached max_volume; kept for proofreading");
            }
        }
    }
    for l in labels.labels.iter_mut() {
        *l = renumber.get(l).copied().unwrap_or(0);
    }
    info!("instseg: {} candidates, {} myelinated", candidates.len(), records.len());
    Ok(Instances {
        axons: labels,
        records,
        candidates,
        n_seeds: seed_list.len(),
        n_supervoxels: sv.q,
        fragments_merged,
    })
}

/// Myelin instances; all zero when there are no axons.
pub fn myelin_map(axons: &LabelVolume, myelin: &LabelVolume) -> Result<MyelinInstances> {
    if axons.labels.iter().all(|&l| l == 0) {
        myelin.ensure_congruent(axons.dims, axons.voxel_size, "myelin")?;
        return Ok(MyelinInstances {
            labels: LabelVolume::zeros(axons.dims, axons.voxel_size, LabelKind::MyelinInstance),
            far_voxels: BTreeMap::new(),
        });
    }
    Ok(myelinmap::myelin_instances(axons, myelin)?)
}

/// Morphometry of every axon; per-axon failures become rejections.
pub fn morphometry(cfg: &PipelineConfig, axons: &LabelVolume, myelin_inst: &LabelVolume) -> Result<Vec<AxonOutcome>> {
    let ids = axons.distinct_labels();
    let p = MorphoParams {
        length_threshold_um: cfg.morpho.length_threshold_um,
    };
    let all = morpho::morphometry_all(&ids, axons, myelin_inst, &p)?;
    Ok(all
        .into_iter()
        .map(|(id, r)| {
            r.unwrap_or_else(|e| AxonOutcome::Rejected {
                axon_id: id,
                length_um: 0.0,
                reason: e.to_string(),
            })
        })
        .collect())
}

/// Supervoxels for a volume using the configured SLIC settings.
pub fn supervoxels(cfg: &PipelineConfig, v: &Volume) -> Result<SupervoxelMap> {
    Ok(instseg::slic_supervoxels(v, cfg.instseg.slic_target_size, cfg.instseg.slic_compactness)?)
}
