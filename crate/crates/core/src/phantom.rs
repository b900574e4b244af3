//! Synthetic myelinated-axon volumes with exact ground truth.
//!
//! Tubes are rasterized by the physical distance from each voxel center to
//! a polyline centerline. Centerline points are given in continuous voxel
//! coordinates (voxel `(i, j, k)` is the point `(i, j, k)`); radii are in
//! micrometers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelKind, LabelVolume, Volume, VoxelSize, FIRST_INSTANCE, MYELIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Centerline {
    Straight { start: [f64; 3], end: [f64; 3] },
    Polyline { points: Vec<[f64; 3]> },
    Helix { center: [f64; 2], radius: f64, pitch: f64, z0: f64, z1: f64 },
}

impl Centerline {
    /// Vertices of the polyline approximation, in voxel coordinates.
    pub fn vertices(&self) -> Vec<[f64; 3]> {
        match self {
            Centerline::Straight { start, end } => vec![*start, *end],
            Centerline::Polyline { points } => points.clone(),
            Centerline::Helix {
                center,
                radius,
                pitch,
                z0,
                z1,
            } => {
                let n = (((z1 - z0).abs() * 2.0).ceil() as usize).max(2);
                (0..=n)
                    .map(|i| {
                        let z = z0 + (z1 - z0) * i as f64 / n as f64;
                        let a = std::f64::consts::TAU * (z - z0) / pitch;
                        [center[0] + radius * a.cos(), center[1] + radius * a.sin(), z]
                    })
                    .collect()
            }
        }
    }
}

fn default_lumen() -> f32 {
    0.85
}
fn default_shell() -> f32 {
    0.15
}
fn default_background() -> f32 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub centerline: Centerline,
    pub lumen_radius_um: f64,
    pub shell_thickness_um: f64,
    #[serde(default = "default_lumen")]
    pub lumen_intensity: f32,
    #[serde(default = "default_shell")]
    pub shell_intensity: f32,
    #[serde(default = "default_true")]
    pub myelinated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub voxel_size_nm: [f64; 3],
    pub tubes: Vec<TubeSpec>,
    #[serde(default = "default_background")]
    pub background: f32,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

/// Generator output. Tube `t` carries instance id `FIRST_INSTANCE + t` in
/// both instance maps.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub semantic: LabelVolume,
    pub axons: LabelVolume,
    pub myelin: LabelVolume,
    pub myelinated: Vec<bool>,
}

struct Raster {
    verts: Vec<[f64; 3]>,
    lo: [f64; 3],
    hi: [f64; 3],
    lumen_nm: f64,
    outer_nm: f64,
}

fn seg_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

impl Raster {
    fn new(t: &TubeSpec, vs: VoxelSize) -> Result<Self> {
        let s = vs.to_array();
        let verts: Vec<[f64; 3]> = t
            .centerline
            .vertices()
            .into_iter()
            .map(|v| [v[0] * s[0], v[1] * s[1], v[2] * s[2]])
            .collect();
        if verts.len() < 2 {
            return Err(Error::param("centerline needs at least two points"));
        }
        let lumen_nm = t.lumen_radius_um * 1000.0;
        let shell_nm = if t.myelinated { t.shell_thickness_um * 1000.0 } else { 0.0 };
        if !(lumen_nm > 0.0) || shell_nm < 0.0 {
            return Err(Error::param("tube radii must be positive"));
        }
        let outer_nm = lumen_nm + shell_nm;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &verts {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a] - outer_nm);
                hi[a] = hi[a].max(v[a] + outer_nm);
            }
        }
        Ok(Raster {
            verts,
            lo,
            hi,
            lumen_nm,
            outer_nm,
        })
    }

    fn dist(&self, p: [f64; 3]) -> f64 {
        if (0..3).any(|a| p[a] < self.lo[a] || p[a] > self.hi[a]) {
            return f64::INFINITY;
        }
        self.verts
            .windows(2)
            .map(|w| seg_dist2(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

#[derive(Clone, Copy)]
enum Hit {
    Empty,
    Lumen(u32),
    Shell(u32),
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let dims = Dims::from(spec.dims).validate()?;
    let vs = VoxelSize::from(spec.voxel_size_nm).validate()?;
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::param("noise_sigma must be >= 0"));
    }
    let rasters = spec
        .tubes
        .iter()
        .map(|t| Raster::new(t, vs))
        .collect::<Result<Vec<_>>>()?;
    // a voxel sits in at most one lumen and in no other tube's shell or lumen
    let hits: Vec<Hit> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let (x, y, z) = dims.coords(i);
            let p = [x as f64 * vs.x, y as f64 * vs.y, z as f64 * vs.z];
            let mut lumen: Option<u32> = None;
            let mut shell: Option<(u32, f64)> = None;
            let mut overlap = false;
            for (t, r) in rasters.iter().enumerate() {
                let d = r.dist(p);
                if d <= r.lumen_nm {
                    overlap |= lumen.is_some() || shell.is_some();
                    lumen = Some(t as u32);
                } else if d <= r.outer_nm {
                    overlap |= lumen.is_some();
                    let depth = d - r.lumen_nm;
                    if shell.is_none_or(|(_, best)| depth < best) {
                        shell = Some((t as u32, depth));
                    }
                }
            }
            if overlap {
                return Err(Error::param(format!("tubes overlap at voxel ({x}, {y}, {z})")));
            }
            Ok(match (lumen, shell) {
                (Some(t), _) => Hit::Lumen(t),
                (None, Some((t, _))) => Hit::Shell(t),
                _ => Hit::Empty,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = vec![spec.background; dims.len()];
    let mut semantic = LabelVolume::zeros(dims, vs, LabelKind::Semantic);
    let mut axons = LabelVolume::zeros(dims, vs, LabelKind::AxonInstance);
    let mut myelin = LabelVolume::zeros(dims, vs, LabelKind::MyelinInstance);
    for (i, h) in hits.iter().enumerate() {
        match *h {
            Hit::Empty => {}
            Hit::Lumen(t) => {
                data[i] = spec.tubes[t as usize].lumen_intensity;
                axons.labels[i] = FIRST_INSTANCE + t;
            }
            Hit::Shell(t) => {
                data[i] = spec.tubes[t as usize].shell_intensity;
                semantic.labels[i] = MYELIN;
                myelin.labels[i] = FIRST_INSTANCE + t;
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::param(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        for v in data.iter_mut() {
            let n: f64 = normal.sample(&mut rng);
            *v = (*v as f64 + n).clamp(0.0, 1.0) as f32;
        }
    } else {
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(Phantom {
        volume: Volume::new(dims, vs, data)?,
        semantic,
        axons,
        myelin,
        myelinated: spec.tubes.iter().map(|t| t.myelinated).collect(),
    })
}

/// Ten straight z-parallel tubes on a 4 × 3 grid of a `n³` volume at 20 nm
/// isotropic, lumen radii 4..=12 voxels and shells 3..=6 voxels.
pub fn ten_tube_spec(n: usize, noise_sigma: f64, rng_seed: u64) -> PhantomSpec {
    let vs = 20.0;
    let lumen = [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 6.0];
    let shell = [3.0, 4.0, 5.0, 6.0, 3.0, 4.0, 5.0, 6.0, 4.0, 5.0];
    let cols = 4;
    let rows = 3;
    let pitch_x = n as f64 / cols as f64;
    let pitch_y = n as f64 / rows as f64;
    let tubes = (0..10)
        .map(|t| {
            let cx = pitch_x * ((t % cols) as f64 + 0.5);
            let cy = pitch_y * ((t / cols) as f64 + 0.5);
            TubeSpec {
                centerline: Centerline::Straight {
                    start: [cx, cy, -5.0],
                    end: [cx, cy, n as f64 + 5.0],
                },
                lumen_radius_um: lumen[t] * vs / 1000.0,
                shell_thickness_um: shell[t] * vs / 1000.0,
                lumen_intensity: default_lumen(),
                shell_intensity: default_shell(),
                myelinated: true,
            }
        })
        .collect();
    PhantomSpec {
        dims: [n, n, n],
        voxel_size_nm: [vs; 3],
        tubes,
        background: default_background(),
        noise_sigma,
        rng_seed,
    }
}
