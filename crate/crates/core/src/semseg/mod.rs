//! Semantic myelin segmentation: thresholding, seeded region growing and a
//! scribble-trained random forest. Myelin is the dark class.

mod forest;

use std::collections::VecDeque;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccl::{self, Connectivity};
use crate::error::{Error, Result};
use crate::filters;
use crate::volume::{Dims, LabelKind, LabelVolume, Volume, Voxel, MYELIN};

pub use forest::{predict_forest, train_forest, ForestModel, ForestParams, Node, Tree, FOREST_FORMAT_VERSION};

pub const N_FEATURES: usize = 5;

/// Feature scales in voxels: smoothing, LoG, gradient magnitude, DoG outer
/// and DoG inner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSigmas {
    pub smooth: f64,
    pub log: f64,
    pub gradient: f64,
    pub dog_outer: f64,
    pub dog_inner: f64,
}

impl Default for FeatureSigmas {
    fn default() -> Self {
        FeatureSigmas {
            smooth: 2.0,
            log: 0.5,
            gradient: 2.0,
            dog_outer: 5.0,
            dog_inner: 1.0,
        }
    }
}

/// Five aligned channels: raw, smoothed, LoG, gradient magnitude, DoG.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub dims: Dims,
    pub channels: Vec<Vec<f32>>,
}

impl FeatureStack {
    #[inline]
    pub fn vector(&self, idx: usize) -> [f32; N_FEATURES] {
        let mut out = [0f32; N_FEATURES];
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c[idx];
        }
        out
    }
}

pub fn compute_features(v: &Volume) -> FeatureStack {
    compute_features_with(v, &FeatureSigmas::default())
}

pub fn compute_features_with(v: &Volume, s: &FeatureSigmas) -> FeatureStack {
    let d = v.dims;
    let smooth = filters::gaussian_3d(&v.data, d, s.smooth);
    let log = filters::laplacian_of_gaussian(&v.data, d, s.log);
    let grad = filters::gaussian_gradient_magnitude(&v.data, d, s.gradient);
    let outer = filters::gaussian_3d(&v.data, d, s.dog_outer);
    let inner = filters::gaussian_3d(&v.data, d, s.dog_inner);
    let dog = outer.par_iter().zip(inner.par_iter()).map(|(&a, &b)| a - b).collect();
    FeatureStack {
        dims: d,
        channels: vec![v.data.clone(), smooth, log, grad, dog],
    }
}

fn semantic_from(v: &Volume, pred: impl Fn(usize) -> bool + Sync) -> LabelVolume {
    let labels = (0..v.data.len())
        .into_par_iter()
        .map(|i| if pred(i) { MYELIN } else { 0 })
        .collect();
    LabelVolume {
        dims: v.dims,
        voxel_size: v.voxel_size,
        kind: LabelKind::Semantic,
        labels,
    }
}

/// Myelin = voxels with intensity `<= t`.
pub fn threshold_myelin(v: &Volume, t: f32) -> Result<LabelVolume> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("threshold {t} outside [0, 1]")));
    }
    Ok(semantic_from(v, |i| v.data[i] <= t))
}

/// Seeded region growing over 6-neighbours against each region's running
/// mean. Seeds already inside an earlier region do not start a new one.
pub fn srg_myelin(v: &Volume, seeds: &[Voxel], tol: f32) -> Result<LabelVolume> {
    if seeds.is_empty() {
        return Err(Error::param("srg needs at least one seed"));
    }
    let dims = v.dims;
    let starts = seeds.iter().map(|s| s.index_in(dims)).collect::<Result<Vec<_>>>()?;
    let mut out = v.empty_labels(LabelKind::Semantic);
    let tol = tol as f64;
    let mut queue = VecDeque::new();
    for s in starts {
        if out.labels[s] != 0 {
            continue;
        }
        out.labels[s] = MYELIN;
        let mut sum = v.data[s] as f64;
        let mut n = 1f64;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for nb in dims.neighbors6(i) {
                if out.labels[nb] != 0 {
                    continue;
                }
                let val = v.data[nb] as f64;
                if (val - sum / n).abs() <= tol {
                    out.labels[nb] = MYELIN;
                    sum += val;
                    n += 1.0;
                    queue.push_back(nb);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    Random,
    Intensity,
}

/// Automatic SRG seeds. `Intensity` picks the darkest voxels greedily,
/// suppressing anything within 2 voxels of an accepted seed; it may return
/// fewer than `n` seeds when suppression exhausts the volume.
pub fn auto_seeds(v: &Volume, mode: SeedMode, n: usize, rng_seed: u64) -> Result<Vec<Voxel>> {
    let dims = v.dims;
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    if n > dims.len() {
        return Err(Error::param(format!("{n} seeds requested from {} voxels", dims.len())));
    }
    match mode {
        SeedMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut picked = index::sample(&mut rng, dims.len(), n).into_vec();
            picked.sort_unstable();
            Ok(picked.into_iter().map(|i| Voxel::from_index(dims, i)).collect())
        }
        SeedMode::Intensity => {
            let mut order: Vec<usize> = (0..dims.len()).collect();
            order.par_sort_by(|&a, &b| v.data[a].total_cmp(&v.data[b]).then(a.cmp(&b)));
            let mut suppressed = vec![false; dims.len()];
            let mut out = Vec::with_capacity(n);
            for i in order {
                if out.len() == n {
                    break;
                }
                if suppressed[i] {
                    continue;
                }
                let (x, y, z) = dims.coords(i);
                out.push(Voxel::new(x, y, z));
                for dz in -2i64..=2 {
                    for dy in -2i64..=2 {
                        for dx in -2i64..=2 {
                            if dx * dx + dy * dy + dz * dz > 4 {
                                continue;
                            }
                            if let Some(j) = dims.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
                                suppressed[j] = true;
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Clear 26-connected myelin components smaller than `min_vox`.
pub fn remove_small_components(lv: &LabelVolume, min_vox: usize) -> LabelVolume {
    let mut out = lv.clone();
    ccl::remove_small_components(&mut out.labels, out.dims, Connectivity::TwentySix, min_vox);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScribbleClass {
    Myelin,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scribble {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub class: ScribbleClass,
}

pub fn parse_scribbles(bytes: &[u8]) -> Result<Vec<Scribble>> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn parse_seeds(bytes: &[u8]) -> Result<Vec<Voxel>> {
    Ok(serde_json::from_slice(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec, TubeSpec, Centerline};
    use crate::volume::VoxelSize;

    fn ramp(dims: Dims) -> Volume {
        let data = (0..dims.len()).map(|i| (i % dims.nx) as f32 / dims.nx as f32).collect();
        Volume::new(dims, VoxelSize::isotropic(10.0), data).unwrap()
    }

    pub(crate) fn two_tube_phantom(noise: f64) -> crate::phantom::Phantom {
        let tube = |cx: f64| TubeSpec {
            centerline: Centerline::Straight {
                start: [cx, 24.0, -2.0],
                end: [cx, 24.0, 30.0],
            },
            lumen_radius_um: 0.08,
            shell_thickness_um: 0.05,
            lumen_intensity: 0.8,
            shell_intensity: 0.2,
            myelinated: true,
        };
        generate_phantom(&PhantomSpec {
            dims: [64, 48, 24],
            voxel_size_nm: [10.0; 3],
            tubes: vec![tube(16.0), tube(46.0)],
            background: 0.5,
            noise_sigma: noise,
            rng_seed: 5,
        })
        .unwrap()
    }

    fn dice(a: &LabelVolume, b: &LabelVolume) -> f64 {
        let both = a.labels.iter().zip(&b.labels).filter(|(x, y)| **x != 0 && **y != 0).count();
        2.0 * both as f64 / (a.count_nonzero() + b.count_nonzero()) as f64
    }

    #[test]
    fn features_of_constant() {
        let v = Volume::filled(Dims::new(10, 10, 10), VoxelSize::isotropic(1.0), 0.4);
        let f = compute_features(&v);
        assert!(f.channels[1].iter().all(|&x| x == 0.4));
        for c in 2..5 {
            assert!(f.channels[c].iter().all(|&x| x.abs() < 1e-6), "channel {c}");
        }
    }

    #[test]
    fn features_of_ramp() {
        let dims = Dims::new(40, 8, 8);
        let f = compute_features(&ramp(dims));
        for x in 12..28 {
            let i = dims.index(x, 4, 4);
            assert!((f.channels[3][i] - 1.0 / 40.0).abs() < 1e-5);
            assert!(f.channels[2][i].abs() < 1e-5);
        }
    }

    #[test]
    fn log_of_point_is_symmetric() {
        let dims = Dims::new(9, 9, 9);
        let mut v = Volume::filled(dims, VoxelSize::isotropic(1.0), 0.0);
        v.data[dims.index(4, 4, 4)] = 1.0;
        let f = compute_features(&v);
        let log = &f.channels[2];
        // direct oracle: separable sum of the sampled kernels at each offset
        let g = filters::Kernel1d::gaussian(0.5);
        let d2 = filters::Kernel1d::gaussian_d2(0.5);
        let tap = |k: &filters::Kernel1d, o: i64| -> f64 {
            let j = o + k.radius as i64;
            if j < 0 || j >= k.taps.len() as i64 { 0.0 } else { k.taps[j as usize] }
        };
        for z in 0..9i64 {
            for y in 0..9i64 {
                for x in 0..9i64 {
                    let (ox, oy, oz) = (4 - x, 4 - y, 4 - z);
                    let want = tap(&d2, ox) * tap(&g, oy) * tap(&g, oz)
                        + tap(&g, ox) * tap(&d2, oy) * tap(&g, oz)
                        + tap(&g, ox) * tap(&g, oy) * tap(&d2, oz);
                    let got = log[dims.index(x as usize, y as usize, z as usize)] as f64;
                    assert!((got - want).abs() < 1e-6);
                    let mirror = log[dims.index((8 - x) as usize, y as usize, z as usize)];
                    assert!((got as f32 - mirror).abs() < 1e-7);
                }
            }
        }
        assert!(log[dims.index(4, 4, 4)] < 0.0);
    }

    #[test]
    fn threshold_edges_and_monotone() {
        let dims = Dims::new(8, 8, 2);
        let mut v = ramp(dims);
        v.data.iter_mut().for_each(|x| *x = 0.05 + 0.9 * *x);
        assert_eq!(threshold_myelin(&v, 0.0).unwrap().count_nonzero(), 0);
        assert_eq!(threshold_myelin(&v, 1.0).unwrap().count_nonzero(), dims.len());
        let mut prev = 0;
        for k in 0..=10 {
            let m = threshold_myelin(&v, k as f32 / 10.0).unwrap().count_nonzero();
            assert!(m >= prev);
            prev = m;
        }
        assert!(threshold_myelin(&v, 1.5).is_err());
    }

    #[test]
    fn threshold_on_bimodal_phantom_is_exact() {
        let ph = two_tube_phantom(0.0);
        let got = threshold_myelin(&ph.volume, 0.35).unwrap();
        assert_eq!(got.labels, ph.semantic.labels);
    }

    #[test]
    fn srg_cases() {
        let dims = Dims::new(6, 6, 6);
        let v = Volume::filled(dims, VoxelSize::isotropic(1.0), 0.3);
        let all = srg_myelin(&v, &[Voxel::new(1, 2, 3)], 0.01).unwrap();
        assert_eq!(all.count_nonzero(), dims.len());
        let distinct = Volume::new(dims, v.voxel_size, (0..dims.len()).map(|i| i as f32 / 1000.0).collect()).unwrap();
        let seeds = [Voxel::new(0, 0, 0), Voxel::new(5, 5, 5)];
        let only = srg_myelin(&distinct, &seeds, 0.0).unwrap();
        assert_eq!(only.count_nonzero(), 2);
        assert!(srg_myelin(&v, &[Voxel::new(6, 0, 0)], 0.1).is_err());
    }

    #[test]
    fn srg_on_phantom_shells() {
        let ph = two_tube_phantom(0.02);
        // one seed in each shell, 10 voxels right of each axis
        let seeds = [Voxel::new(16 + 10, 24, 12), Voxel::new(46 + 10, 24, 12)];
        let got = srg_myelin(&ph.volume, &seeds, 0.1).unwrap();
        assert!(dice(&got, &ph.semantic) >= 0.95);
    }

    #[test]
    fn auto_seed_modes() {
        let dims = Dims::new(64, 64, 64);
        let mut v = ramp(dims);
        v.data[dims.index(30, 31, 32)] = -0.5;
        let one = auto_seeds(&v, SeedMode::Intensity, 1, 0).unwrap();
        assert_eq!(one, vec![Voxel::new(30, 31, 32)]);
        let a = auto_seeds(&v, SeedMode::Random, 100, 42).unwrap();
        let b = auto_seeds(&v, SeedMode::Random, 100, 42).unwrap();
        assert_eq!(a, b);
        let set: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 100);
        assert!(auto_seeds(&v, SeedMode::Random, dims.len() + 1, 0).is_err());
        let many = auto_seeds(&v, SeedMode::Intensity, 50, 0).unwrap();
        for (i, p) in many.iter().enumerate() {
            for q in &many[..i] {
                let d2 = [p.x as i64 - q.x as i64, p.y as i64 - q.y as i64, p.z as i64 - q.z as i64]
                    .iter()
                    .map(|d| d * d)
                    .sum::<i64>();
                assert!(d2 > 4);
            }
        }
    }

    #[test]
    fn small_components_boundary() {
        let dims = Dims::new(30, 30, 30);
        let mut lv = LabelVolume::zeros(dims, VoxelSize::isotropic(1.0), LabelKind::Semantic);
        // a 499-voxel bar and a 500-voxel bar
        for i in 0..499 {
            lv.labels[dims.index(i % 25, i / 25, 0)] = MYELIN;
        }
        for i in 0..500 {
            lv.labels[dims.index(i % 25, i / 25, 10)] = MYELIN;
        }
        let out = remove_small_components(&lv, 500);
        assert_eq!(out.count_nonzero(), 500);
        assert!(out.labels[dims.index(0, 0, 10)] == MYELIN);
        assert_eq!(remove_small_components(&out, 500).labels, out.labels);
        assert_eq!(remove_small_components(&lv, 0).labels, lv.labels);
    }

    #[test]
    fn scribble_json() {
        let s = parse_scribbles(br#"[{"x":1,"y":2,"z":3,"class":"myelin"},{"x":0,"y":0,"z":0,"class":"other"}]"#).unwrap();
        assert_eq!(s[0].class, ScribbleClass::Myelin);
        assert!(parse_scribbles(br#"[{"x":1,"y":2,"z":3,"class":"axon"}]"#).is_err());
        assert_eq!(parse_seeds(br#"[{"x":4,"y":5,"z":6}]"#).unwrap(), vec![Voxel::new(4, 5, 6)]);
    }
}
