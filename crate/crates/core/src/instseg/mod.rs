//! Instance segmentation of the intra-axonal space: seeds from the per-slice
//! distance transform of myelin, bounded volume growing, supervoxel
//! refinement and the myelination test.

mod bvg;
mod canny;
mod refine;
mod seeds;
mod slic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bvg::{bvg, bvg_into, edge_barrier};
pub use canny::{canny3d_stack, canny_slice};
pub use refine::{merge_fragments, myelination_all, myelination_test, refine_with_supervoxels, Refinement};
pub use seeds::{edt2d_stack, regional_maxima_counts, seeds_regional_maxima, watershed_counts, seeds_watershed_centroids, watershed_slice};
pub use slic::{slic_supervoxels, SupervoxelMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.0,
            low: 0.05,
            high: 0.1,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::param("canny sigma must be >= 0"));
        }
        if !(self.low < self.high) || self.low < 0.0 {
            return Err(Error::param(format!(
                "canny thresholds need 0 <= low < high, got {} / {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvgParams {
    pub similarity_threshold: f64,
    pub min_volume: usize,
    pub max_volume: usize,
    pub connectivity: u32,
    pub canny: CannyParams,
}

impl Default for BvgParams {
    fn default() -> Self {
        BvgParams {
            similarity_threshold: 0.1,
            min_volume: 100,
            max_volume: 1_000_000,
            connectivity: 6,
            canny: CannyParams::default(),
        }
    }
}

impl BvgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::param("similarity threshold must be in (0, 1]"));
        }
        if self.min_volume >= self.max_volume {
            return Err(Error::param("min_volume must be below max_volume"));
        }
        if self.connectivity != 6 {
            return Err(Error::param("bvg supports 6-connectivity only"));
        }
        self.canny.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedOrigin {
    Maxima,
    Watershed,
    File,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxonRecord {
    pub label: u32,
    pub voxel_count: usize,
    pub seed: crate::volume::Voxel,
    pub seed_origin: SeedOrigin,
    /// Growth hit `max_volume`; kept for proofreading.
    pub flagged: bool,
    pub myelinated: bool,
    pub myelin_fraction: f64,
}
