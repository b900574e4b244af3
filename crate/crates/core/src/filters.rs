//! Separable convolution with reflective borders and sampled Gaussian
//! derivative kernels. Accumulation happens in `f64` so that smoothing a
//! constant grid returns the same constant bit-for-bit.

use rayon::prelude::*;

use crate::volume::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Symmetric-support correlation kernel: `out[p] = Σ taps[i + r] * in[p + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1d {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl Kernel1d {
    pub fn identity() -> Self {
        Kernel1d {
            radius: 0,
            taps: vec![1.0],
        }
    }

    fn support(sigma: f64) -> usize {
        ((4.0 * sigma).ceil() as usize).max(1)
    }

    fn sampled(sigma: f64, f: impl Fn(f64) -> f64) -> Self {
        let radius = Self::support(sigma);
        let taps = (-(radius as i64)..=radius as i64).map(|i| f(i as f64)).collect();
        Kernel1d { radius, taps }
    }

    /// Normalized Gaussian.
    pub fn gaussian(sigma: f64) -> Self {
        if sigma <= 0.0 {
            return Self::identity();
        }
        let mut k = Self::sampled(sigma, |x| (-x * x / (2.0 * sigma * sigma)).exp());
        let s: f64 = k.taps.iter().sum();
        k.taps.iter_mut().for_each(|t| *t /= s);
        k
    }

    /// First derivative of a Gaussian, scaled so a unit ramp has slope 1.
    pub fn gaussian_d1(sigma: f64) -> Self {
        let mut k = Self::sampled(sigma, |x| x * (-x * x / (2.0 * sigma * sigma)).exp());
        let r = k.radius as f64;
        let moment: f64 = k
            .taps
            .iter()
            .enumerate()
            .map(|(i, t)| t * (i as f64 - r))
            .sum();
        k.taps.iter_mut().for_each(|t| *t /= moment);
        k
    }

    /// Second derivative of a Gaussian: zero-sum, unit response to x²/2.
    pub fn gaussian_d2(sigma: f64) -> Self {
        let s2 = sigma * sigma;
        let mut k = Self::sampled(sigma, |x| (x * x / s2 - 1.0) / s2 * (-x * x / (2.0 * s2)).exp());
        let mean = k.taps.iter().sum::<f64>() / k.taps.len() as f64;
        k.taps.iter_mut().for_each(|t| *t -= mean);
        let r = k.radius as f64;
        let moment: f64 = k
            .taps
            .iter()
            .enumerate()
            .map(|(i, t)| t * (i as f64 - r).powi(2) / 2.0)
            .sum();
        k.taps.iter_mut().for_each(|t| *t /= moment);
        k
    }
}

/// Mirror an out-of-range index back into `0..n` (`d c b a | a b c d`).
#[inline]
pub fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Correlate along one axis.
pub fn convolve_axis(data: &[f32], dims: Dims, axis: Axis, k: &Kernel1d) -> Vec<f32> {
    if k.radius == 0 && k.taps[0] == 1.0 {
        return data.to_vec();
    }
    let r = k.radius as i64;
    let mut out = vec![0f32; data.len()];
    match axis {
        Axis::X => {
            let nx = dims.nx;
            out.par_chunks_mut(nx)
                .zip(data.par_chunks(nx))
                .for_each(|(o, row)| {
                    for (x, ov) in o.iter_mut().enumerate() {
                        let mut acc = 0f64;
                        for (t, &w) in k.taps.iter().enumerate() {
                            let xi = reflect(x as i64 + t as i64 - r, nx);
                            acc += w * row[xi] as f64;
                        }
                        *ov = acc as f32;
                    }
                });
        }
        Axis::Y => {
            let (nx, ny) = (dims.nx, dims.ny);
            let plane = dims.slice_len();
            out.par_chunks_mut(plane)
                .zip(data.par_chunks(plane))
                .for_each(|(o, sl)| {
                    let mut acc = vec![0f64; nx];
                    for y in 0..ny {
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for (t, &w) in k.taps.iter().enumerate() {
                            let yi = reflect(y as i64 + t as i64 - r, ny);
                            let src = &sl[yi * nx..(yi + 1) * nx];
                            acc.iter_mut().zip(src).for_each(|(a, &s)| *a += w * s as f64);
                        }
                        o[y * nx..(y + 1) * nx]
                            .iter_mut()
                            .zip(&acc)
                            .for_each(|(d, &a)| *d = a as f32);
                    }
                });
        }
        Axis::Z => {
            let nz = dims.nz;
            let plane = dims.slice_len();
            out.par_chunks_mut(plane).enumerate().for_each(|(z, o)| {
                let mut acc = vec![0f64; plane];
                for (t, &w) in k.taps.iter().enumerate() {
                    let zi = reflect(z as i64 + t as i64 - r, nz);
                    let src = &data[zi * plane..(zi + 1) * plane];
                    acc.iter_mut().zip(src).for_each(|(a, &s)| *a += w * s as f64);
                }
                o.iter_mut().zip(&acc).for_each(|(d, &a)| *d = a as f32);
            });
        }
    }
    out
}

/// Apply one kernel per axis (x, y, z).
pub fn separable(data: &[f32], dims: Dims, kx: &Kernel1d, ky: &Kernel1d, kz: &Kernel1d) -> Vec<f32> {
    let a = convolve_axis(data, dims, Axis::X, kx);
    let b = convolve_axis(&a, dims, Axis::Y, ky);
    if dims.nz == 1 && kz.radius > 0 {
        // a single slice reflects onto itself; only the tap sum matters
        let s: f64 = kz.taps.iter().sum();
        return b.iter().map(|&v| (v as f64 * s) as f32).collect();
    }
    convolve_axis(&b, dims, Axis::Z, kz)
}

/// Isotropic 3D Gaussian smoothing, sigma in voxels.
pub fn gaussian_3d(data: &[f32], dims: Dims, sigma: f64) -> Vec<f32> {
    let g = Kernel1d::gaussian(sigma);
    separable(data, dims, &g, &g, &g)
}

/// 2D Gaussian smoothing applied slice-by-slice.
pub fn gaussian_2d(data: &[f32], dims: Dims, sigma: f64) -> Vec<f32> {
    let g = Kernel1d::gaussian(sigma);
    let a = convolve_axis(data, dims, Axis::X, &g);
    convolve_axis(&a, dims, Axis::Y, &g)
}

/// Magnitude of the Gaussian-smoothed gradient.
pub fn gaussian_gradient_magnitude(data: &[f32], dims: Dims, sigma: f64) -> Vec<f32> {
    let g = Kernel1d::gaussian(sigma);
    let d = Kernel1d::gaussian_d1(sigma);
    let gx = separable(data, dims, &d, &g, &g);
    let gy = separable(data, dims, &g, &d, &g);
    let gz = if dims.nz > 1 {
        separable(data, dims, &g, &g, &d)
    } else {
        vec![0.0; data.len()]
    };
    gx.par_iter()
        .zip(gy.par_iter())
        .zip(gz.par_iter())
        .map(|((&a, &b), &c)| ((a as f64).powi(2) + (b as f64).powi(2) + (c as f64).powi(2)).sqrt() as f32)
        .collect()
}

/// Laplacian of Gaussian.
pub fn laplacian_of_gaussian(data: &[f32], dims: Dims, sigma: f64) -> Vec<f32> {
    let g = Kernel1d::gaussian(sigma);
    let d2 = Kernel1d::gaussian_d2(sigma);
    let xx = separable(data, dims, &d2, &g, &g);
    let yy = separable(data, dims, &g, &d2, &g);
    let zz = if dims.nz > 1 {
        separable(data, dims, &g, &g, &d2)
    } else {
        vec![0.0; data.len()]
    };
    xx.par_iter()
        .zip(yy.par_iter())
        .zip(zz.par_iter())
        .map(|((&a, &b), &c)| (a as f64 + b as f64 + c as f64) as f32)
        .collect()
}
