//! Pipeline configuration: one TOML table per module, defaults equal to the
//! published parameter table.

use std::path::{Path, PathBuf};

use axonvox_core::instseg::CannyParams;
use axonvox_core::preproc::DenoiseParams;
use axonvox_core::semseg::{FeatureSigmas, SeedMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: RunConfig,
    pub preproc: PreprocConfig,
    pub semseg: SemsegConfig,
    pub instseg: InstsegConfig,
    pub morpho: MorphoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed; stage seeds are derived from it.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocConfig {
    pub normalize_contrast: bool,
    pub denoise: DenoiseParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemsegMethod {
    Threshold,
    Srg,
    Forest,
}

impl std::str::FromStr for SemsegMethod {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SemsegMethod::Threshold),
            "srg" => Ok(SemsegMethod::Srg),
            "forest" => Ok(SemsegMethod::Forest),
            o => Err(PipelineError::Config(format!("unknown semseg method {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemsegConfig {
    pub method: SemsegMethod,
    pub threshold: f64,
    pub srg_tolerance: f64,
    pub srg_seed_mode: SeedMode,
    pub srg_n_seeds: usize,
    /// JSON scribbles `[{x,y,z,class}]`, required by the forest method.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scribbles: Option<PathBuf>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub feature_sigmas: FeatureSigmas,
    pub myelin_min_volume: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Maxima,
    Watershed,
    File,
}

impl std::str::FromStr for SeedSource {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxima" => Ok(SeedSource::Maxima),
            "watershed" => Ok(SeedSource::Watershed),
            "file" => Ok(SeedSource::File),
            o => Err(PipelineError::Config(format!("unknown seed source {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstsegConfig {
    pub seeds: SeedSource,
    /// JSON seeds `[{x,y,z}]` for `seeds = "file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds_file: Option<PathBuf>,
    pub h: f64,
    pub similarity_threshold: f64,
    pub min_volume: usize,
    pub max_volume: usize,
    pub canny: CannyParams,
    pub refine: bool,
    pub slic_target_size: usize,
    pub slic_compactness: f64,
    pub overlap: f64,
    pub big_threshold: usize,
    pub min_fragment: usize,
    pub myelinated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphoConfig {
    pub length_threshold_um: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run: RunConfig::default(),
            preproc: PreprocConfig::default(),
            semseg: SemsegConfig::default(),
            instseg: InstsegConfig::default(),
            morpho: MorphoConfig::default(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0 }
    }
}

impl Default for PreprocConfig {
    fn default() -> Self {
        PreprocConfig {
            normalize_contrast: true,
            denoise: DenoiseParams::default(),
        }
    }
}

impl Default for SemsegConfig {
    fn default() -> Self {
        SemsegConfig {
            method: SemsegMethod::Threshold,
            threshold: 0.3,
            srg_tolerance: 0.1,
            srg_seed_mode: SeedMode::Intensity,
            srg_n_seeds: 100,
            scribbles: None,
            n_trees: 50,
            max_depth: 12,
            feature_sigmas: FeatureSigmas::default(),
            myelin_min_volume: 500,
        }
    }
}

impl Default for InstsegConfig {
    fn default() -> Self {
        InstsegConfig {
            seeds: SeedSource::Watershed,
            seeds_file: None,
            h: 2.0,
            similarity_threshold: 0.1,
            min_volume: 100,
            max_volume: 1_000_000,
            canny: CannyParams::default(),
            refine: true,
            slic_target_size: 1000,
            slic_compactness: 0.1,
            overlap: 0.8,
            big_threshold: 5000,
            min_fragment: 100,
            myelinated_fraction: 0.7,
        }
    }
}

impl Default for MorphoConfig {
    fn default() -> Self {
        MorphoConfig {
            length_threshold_um: 4.0,
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(msg.to_string()))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.preproc.denoise.validate()?;
        let s = &self.semseg;
        check((0.0..=1.0).contains(&s.threshold), "semseg.threshold must be in [0, 1]")?;
        check(s.srg_tolerance >= 0.0 && s.srg_tolerance.is_finite(), "semseg.srg_tolerance must be >= 0")?;
        check(s.srg_n_seeds >= 1, "semseg.srg_n_seeds must be >= 1")?;
        check(s.n_trees >= 1, "semseg.n_trees must be >= 1")?;
        let f = &s.feature_sigmas;
        check(
            [f.smooth, f.log, f.gradient, f.dog_outer, f.dog_inner]
                .iter()
                .all(|&x| x > 0.0 && x.is_finite()),
            "semseg.feature_sigmas must be positive",
        )?;
        if s.method == SemsegMethod::Forest {
            check(s.scribbles.is_some(), "semseg.method = \"forest\" needs semseg.scribbles")?;
        }
        let i = &self.instseg;
        check(i.h > 0.0 && i.h.is_finite(), "instseg.h must be > 0")?;
        check(
            i.similarity_threshold > 0.0 && i.similarity_threshold <= 1.0,
            "instseg.similarity_threshold must be in (0, 1]",
        )?;
        check(i.min_volume < i.max_volume, "instseg.min_volume must be below max_volume")?;
        i.canny.validate()?;
        check(i.slic_target_size >= 8, "instseg.slic_target_size must be >= 8")?;
        check(i.slic_compactness > 0.0 && i.slic_compactness.is_finite(), "instseg.slic_compactness must be > 0")?;
        check(i.overlap > 0.0 && i.overlap <= 1.0, "instseg.overlap must be in (0, 1]")?;
        check(
            (0.0..=1.0).contains(&i.myelinated_fraction),
            "instseg.myelinated_fraction must be in [0, 1]",
        )?;
        if i.seeds == SeedSource::File {
            check(i.seeds_file.is_some(), "instseg.seeds = \"file\" needs instseg.seeds_file")?;
        }
        check(
            self.morpho.length_threshold_um >= 0.0 && self.morpho.length_threshold_um.is_finite(),
            "morpho.length_threshold_um must be >= 0",
        )?;
        Ok(())
    }

    /// Parameters the method fixes, listed when overridden.
    pub fn fixed_overrides(&self) -> Vec<String> {
        let d = PipelineConfig::default();
        let mut w = Vec::new();
        if self.semseg.feature_sigmas != d.semseg.feature_sigmas {
            w.push(format!(
                "semseg.feature_sigmas overridden ({:?}); the published features use 2, 0.5, 2, 5",
                self.semseg.feature_sigmas
            ));
        }
        if self.instseg.h != d.instseg.h {
            w.push(format!("instseg.h overridden ({}); the published value is 2", self.instseg.h));
        }
        if self.morpho.length_threshold_um != d.morpho.length_threshold_um {
            w.push(format!(
                "morpho.length_threshold_um overridden ({}); the published value is 4",
                self.morpho.length_threshold_um
            ));
        }
        w
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn srg_seed(&self) -> u64 {
        self.run.seed
    }

    pub fn forest_seed(&self) -> u64 {
        self.run.seed.wrapping_add(1)
    }
}
