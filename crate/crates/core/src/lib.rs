//! Volumetric segmentation and morphometry of myelinated axons in
//! electron-microscopy stacks.

pub mod ccl;
pub mod edt;
pub mod error;
pub mod filters;
pub mod instseg;
pub mod io;
pub mod morpho;
pub mod myelinmap;
pub mod phantom;
pub mod preproc;
pub mod semseg;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BoundingBox, Dims, Grid, LabelKind, LabelVolume, Volume, Voxel, VoxelSize};
