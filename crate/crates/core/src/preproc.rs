//! Slice-wise contrast normalization and 3D denoising.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters;
use crate::volume::{Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiseMethod {
    None,
    Gaussian,
    Nlm3d,
}

impl std::str::FromStr for DenoiseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DenoiseMethod::None),
            "gaussian" => Ok(DenoiseMethod::Gaussian),
            "nlm3d" => Ok(DenoiseMethod::Nlm3d),
            other => Err(Error::param(format!("unknown denoise method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseParams {
    pub method: DenoiseMethod,
    pub gaussian_sigma: f64,
    pub nlm_patch_radius: usize,
    pub nlm_search_radius: usize,
    pub nlm_h: f64,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            method: DenoiseMethod::Nlm3d,
            gaussian_sigma: 1.0,
            nlm_patch_radius: 1,
            nlm_search_radius: 3,
            nlm_h: 0.1,
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            DenoiseMethod::None => Ok(()),
            DenoiseMethod::Gaussian => {
                if self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("gaussian_sigma must be > 0"))
                }
            }
            DenoiseMethod::Nlm3d => {
                if self.nlm_patch_radius < 1 {
                    return Err(Error::param("nlm_patch_radius must be >= 1"));
                }
                if !(self.nlm_h > 0.0 && self.nlm_h.is_finite()) {
                    return Err(Error::param("nlm_h must be > 0"));
                }
                Ok(())
            }
        }
    }
}

fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Match every slice's mean and standard deviation to those of the stack.
pub fn normalize_contrast(stack: &Volume) -> Volume {
    let plane = stack.dims.slice_len();
    let per_slice: Vec<(f64, f64)> = stack.data.par_chunks(plane).map(mean_std).collect();
    // combine per-slice moments sequentially so the result is schedule-free
    let n = stack.data.len() as f64;
    let mu_g = per_slice.iter().map(|&(m, _)| m * plane as f64).sum::<f64>() / n;
    let var_g = per_slice
        .iter()
        .map(|&(m, s)| plane as f64 * (s * s + (m - mu_g).powi(2)))
        .sum::<f64>()
        / n;
    let sigma_g = var_g.sqrt();
    let mut out = stack.clone();
    out.data
        .par_chunks_mut(plane)
        .zip(per_slice.par_iter())
        .for_each(|(sl, &(mu, sigma))| {
            for v in sl.iter_mut() {
                let t = if sigma > 0.0 {
                    (*v as f64 - mu) / sigma * sigma_g + mu_g
                } else {
                    mu_g
                };
                *v = t.clamp(0.0, 1.0) as f32;
            }
        });
    out
}

pub fn denoise(v: &Volume, p: &DenoiseParams) -> Result<Volume> {
    p.validate()?;
    let data = match p.method {
        DenoiseMethod::None => return Ok(v.clone()),
        DenoiseMethod::Gaussian => filters::gaussian_3d(&v.data, v.dims, p.gaussian_sigma),
        DenoiseMethod::Nlm3d => nlm3d(&v.data, v.dims, p.nlm_patch_radius, p.nlm_search_radius, p.nlm_h),
    };
    Ok(Volume {
        dims: v.dims,
        voxel_size: v.voxel_size,
        data,
    })
}

fn shifted_row(src: &[f32], dx: i64, dst: &mut [f32]) {
    let nx = src.len() as i64;
    let lo = (-dx).clamp(0, nx) as usize;
    let hi = (nx - dx).clamp(0, nx) as usize;
    for x in (0..lo).chain(hi.max(lo)..nx as usize) {
        dst[x] = src[filters::reflect(x as i64 + dx, nx as usize)];
    }
    if lo < hi {
        let off = (lo as i64 + dx) as usize;
        dst[lo..hi].copy_from_slice(&src[off..off + (hi - lo)]);
    }
}

fn box_row(src: &[f32], r: usize, dst: &mut [f32]) {
    let n = src.len();
    let ri = r as i64;
    let edge = |x: usize| (-ri..=ri).map(|t| src[filters::reflect(x as i64 + t, n)]).sum::<f32>();
    if n <= 2 * r {
        for (x, d) in dst.iter_mut().enumerate() {
            *d = edge(x);
        }
        return;
    }
    for x in (0..r).chain(n - r..n) {
        dst[x] = edge(x);
    }
    for x in r..n - r {
        dst[x] = src[x - r..=x + r].iter().sum();
    }
}

/// Sum of `src` rows `refl(i + t)`, `t ∈ [-r, r]`, rows of length `w`.
fn box_rows(src: &[f32], w: usize, count: usize, i: usize, r: usize, dst: &mut [f32]) {
    dst.fill(0.0);
    for t in -(r as i64)..=r as i64 {
        let j = filters::reflect(i as i64 + t, count);
        dst.iter_mut().zip(&src[j * w..(j + 1) * w]).for_each(|(d, &s)| *d += s);
    }
}

/// Non-local means over a cubic search window. For each offset the squared
/// difference to the reflected shift is box-averaged over the `(2r+1)³`
/// patch, reflecting again at the borders.
pub fn nlm3d(data: &[f32], dims: Dims, patch_radius: usize, search_radius: usize, h: f64) -> Vec<f32> {
    if search_radius == 0 {
        return data.to_vec();
    }
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let plane = dims.slice_len();
    let pr = patch_radius;
    let pz = if nz > 1 { pr } else { 0 };
    let norm = 1.0 / (((2 * pr + 1) * (2 * pr + 1) * (2 * pz + 1)) as f32);
    let scale = norm / (h * h) as f32;
    let s = search_radius as i64;
    let sz = if nz > 1 { s } else { 0 };
    let mut num: Vec<f64> = data.iter().map(|&v| v as f64).collect();
    let mut den = vec![1f64; data.len()];
    let mut shifted = vec![0f32; data.len()];
    let mut a = vec![0f32; data.len()];
    let mut b = vec![0f32; data.len()];
    for dz in -sz..=sz {
        for dy in -s..=s {
            for dx in -s..=s {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                shifted
                    .par_chunks_mut(plane)
                    .zip(a.par_chunks_mut(plane))
                    .enumerate()
                    .for_each(|(z, (sh, df))| {
                        let zq = filters::reflect(z as i64 + dz, nz);
                        for y in 0..ny {
                            let yq = filters::reflect(y as i64 + dy, ny);
                            let src = &data[dims.index(0, yq, zq)..][..nx];
                            let row = &mut sh[y * nx..(y + 1) * nx];
                            shifted_row(src, dx, row);
                            let own = &data[dims.index(0, y, z)..][..nx];
                            for ((d, &p), &q) in df[y * nx..(y + 1) * nx].iter_mut().zip(own).zip(row.iter()) {
                                *d = (p - q) * (p - q);
                            }
                        }
                    });
                b.par_chunks_mut(nx)
                    .zip(a.par_chunks(nx))
                    .for_each(|(o, i)| box_row(i, pr, o));
                a.par_chunks_mut(plane)
                    .zip(b.par_chunks(plane))
                    .for_each(|(o, sl)| {
                        for y in 0..ny {
                            box_rows(sl, nx, ny, y, pr, &mut o[y * nx..(y + 1) * nx]);
                        }
                    });
                let ssd: &[f32] = if pz > 0 {
                    b.par_chunks_mut(plane)
                        .enumerate()
                        .for_each(|(z, o)| box_rows(&a, plane, nz, z, pz, o));
                    &b
                } else {
                    &a
                };
                num.par_iter_mut()
                    .zip(den.par_iter_mut())
                    .zip(ssd.par_iter().zip(shifted.par_iter()))
                    .for_each(|((n, d), (&m, &q))| {
                        let w = (-(m.max(0.0) * scale)).exp() as f64;
                        *n += w * q as f64;
                        *d += w;
                    });
            }
        }
    }
    num.par_iter().zip(den.par_iter()).map(|(&n, &d)| (n / d) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelSize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(dims: Dims, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| rng.random::<f32>()).collect();
        Volume::new(dims, VoxelSize::isotropic(10.0), data).unwrap()
    }

    #[test]
    fn slice_means_match_global() {
        let dims = Dims::new(16, 16, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..dims.len())
            .map(|i| {
                let base = if i < 256 { 0.3 } else { 0.7 };
                base + (rng.random::<f32>() - 0.5) * 0.1
            })
            .collect();
        let v = Volume::new(dims, VoxelSize::isotropic(10.0), data).unwrap();
        let global = v.data.iter().map(|&x| x as f64).sum::<f64>() / 512.0;
        let out = normalize_contrast(&v);
        for z in 0..2 {
            let m = out.slice(z).iter().map(|&x| x as f64).sum::<f64>() / 256.0;
            assert!((m - global).abs() < 1e-6, "slice {z}: {m} vs {global}");
        }
    }

    #[test]
    fn constant_slice_takes_global_mean() {
        let dims = Dims::new(4, 4, 2);
        let mut data = vec![0.25f32; 16];
        data.extend((0..16).map(|i| i as f32 / 20.0));
        let v = Volume::new(dims, VoxelSize::isotropic(1.0), data).unwrap();
        let mu = v.data.iter().map(|&x| x as f64).sum::<f64>() / 32.0;
        let out = normalize_contrast(&v);
        assert!(out.slice(0).iter().all(|&x| (x as f64 - mu).abs() < 1e-6));
    }

    #[test]
    fn normalization_idempotent() {
        let dims = Dims::new(12, 12, 3);
        let mut v = random_volume(dims, 5);
        v.data.iter_mut().for_each(|x| *x = 0.4 + 0.2 * *x);
        let once = normalize_contrast(&v);
        let twice = normalize_contrast(&once);
        for (a, b) in once.data.iter().zip(&twice.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn denoisers_preserve_constants() {
        let dims = Dims::new(8, 9, 6);
        let v = Volume::filled(dims, VoxelSize::isotropic(5.0), 0.61);
        for method in [DenoiseMethod::None, DenoiseMethod::Gaussian, DenoiseMethod::Nlm3d] {
            let p = DenoiseParams {
                method,
                ..DenoiseParams::default()
            };
            let out = denoise(&v, &p).unwrap();
            assert!(out.data.iter().all(|&x| x == 0.61), "{method:?}");
        }
    }

    fn nlm_brute(data: &[f32], dims: Dims, pr: i64, sr: i64, h: f64) -> Vec<f32> {
        let at = |x: i64, y: i64, z: i64| {
            data[dims.index(
                filters::reflect(x, dims.nx),
                filters::reflect(y, dims.ny),
                filters::reflect(z, dims.nz),
            )] as f64
        };
        let mut out = Vec::new();
        for z in 0..dims.nz as i64 {
            for y in 0..dims.ny as i64 {
                for x in 0..dims.nx as i64 {
                    let (mut n, mut d) = (0.0, 0.0);
                    for oz in -sr..=sr {
                        for oy in -sr..=sr {
                            for ox in -sr..=sr {
                                let mut ssd = 0.0;
                                let mut cnt = 0.0;
                                // squared difference to the reflected shift, then a reflected box
                                for pz in -pr..=pr {
                                    for py in -pr..=pr {
                                        for px in -pr..=pr {
                                            let qx = filters::reflect(x + px, dims.nx) as i64;
                                            let qy = filters::reflect(y + py, dims.ny) as i64;
                                            let qz = filters::reflect(z + pz, dims.nz) as i64;
                                            let a = at(qx, qy, qz);
                                            let b = at(qx + ox, qy + oy, qz + oz);
                                            ssd += (a - b) * (a - b);
                                            cnt += 1.0;
                                        }
                                    }
                                }
                                let w = (-(ssd / cnt) / (h * h)).exp();
                                n += w * at(x + ox, y + oy, z + oz);
                                d += w;
                            }
                        }
                    }
                    out.push((n / d) as f32);
                }
            }
        }
        out
    }

    #[test]
    fn nlm_matches_brute_force() {
        let dims = Dims::new(7, 6, 5);
        let v = random_volume(dims, 11);
        let fast = nlm3d(&v.data, dims, 1, 2, 0.3);
        let slow = nlm_brute(&v.data, dims, 1, 2, 0.3);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn nlm_stays_in_range_and_zero_search_is_identity() {
        let dims = Dims::new(10, 10, 5);
        let v = random_volume(dims, 9);
        let (lo, hi) = v.min_max();
        let out = nlm3d(&v.data, dims, 1, 2, 0.2);
        assert!(out.iter().all(|&x| x >= lo && x <= hi));
        assert_eq!(nlm3d(&v.data, dims, 1, 0, 0.2), v.data);
    }

    #[test]
    fn gaussian_step_midpoint() {
        // odd width with a half-valued center column makes the edge plane a voxel plane
        let dims = Dims::new(33, 4, 4);
        let data: Vec<f32> = (0..dims.len())
            .map(|i| match (i % 33).cmp(&16) {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Greater => 1.0,
            })
            .collect();
        let v = Volume::new(dims, VoxelSize::isotropic(1.0), data).unwrap();
        let p = DenoiseParams {
            method: DenoiseMethod::Gaussian,
            gaussian_sigma: 2.0,
            ..DenoiseParams::default()
        };
        let out = denoise(&v, &p).unwrap();
        // 1D oracle: direct sum of the sampled kernel against the step
        let taps: Vec<f64> = (-8..=8).map(|i: i64| (-(i * i) as f64 / 8.0).exp()).collect();
        let norm: f64 = taps.iter().sum();
        let step = |x: i64| match x.cmp(&16) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 1.0,
        };
        for x in 10..23i64 {
            let want: f64 = (-8..=8i64).map(|i| taps[(i + 8) as usize] * step(x + i)).sum::<f64>() / norm;
            assert!((out.get(x as usize, 1, 1) as f64 - want).abs() < 1e-6);
        }
        assert!((out.get(16, 2, 2) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = DenoiseParams {
            method: DenoiseMethod::Gaussian,
            gaussian_sigma: 0.0,
            ..DenoiseParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = DenoiseParams {
            nlm_h: 0.0,
            ..DenoiseParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
