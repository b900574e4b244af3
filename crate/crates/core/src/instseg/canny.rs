use std::collections::VecDeque;

use rayon::prelude::*;

use super::CannyParams;
use crate::error::Result;
use crate::filters::{self, reflect};
use crate::volume::{Dims, LabelKind, LabelVolume, Volume};

/// 2D Canny on one `nx × ny` image: Gaussian smoothing, Sobel gradients
/// (scaled by 1/8 to per-pixel units), non-maximum suppression and
/// hysteresis with absolute thresholds.
///
/// On a gradient plateau the edge pixel is the one on the darker side.
pub fn canny_slice(img: &[f32], nx: usize, ny: usize, p: &CannyParams) -> Vec<bool> {
    let dims = Dims::new(nx, ny, 1);
    let s = filters::gaussian_2d(img, dims, p.sigma);
    let at = |x: i64, y: i64| s[reflect(y, ny) * nx + reflect(x, nx)] as f64;
    let n = nx * ny;
    let mut gx = vec![0f64; n];
    let mut gy = vec![0f64; n];
    for y in 0..ny as i64 {
        for x in 0..nx as i64 {
            let i = y as usize * nx + x as usize;
            gx[i] = ((at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1)))
                / 8.0;
            gy[i] = ((at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1)))
                / 8.0;
        }
    }
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let m = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
            0.0
        } else {
            mag[y as usize * nx + x as usize]
        }
    };
    let mut thin = vec![0f64; n];
    for y in 0..ny as i64 {
        for x in 0..nx as i64 {
            let i = y as usize * nx + x as usize;
            let g = mag[i];
            if g <= 0.0 || g < p.low {
                continue;
            }
            // quantize the gradient direction to one of four neighbours
            let angle = gy[i].atan2(gx[i]);
            let sector = ((angle / std::f64::consts::FRAC_PI_4).round() as i64).rem_euclid(8);
            let (dx, dy) = match sector {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                3 => (-1, 1),
                4 => (-1, 0),
                5 => (-1, -1),
                6 => (0, -1),
                _ => (1, -1),
            };
            let ahead = m(x + dx, y + dy);
            let behind = m(x - dx, y - dy);
            // relative slack absorbs f32 rounding between symmetric pixels
            let eps = 1e-6 * g;
            if g >= ahead - eps && g > behind + eps {
                thin[i] = g;
            }
        }
    }
    let mut edge = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if thin[i] >= p.high {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % nx) as i64, (i / nx) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (a, b) = (x + dx, y + dy);
                if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                    continue;
                }
                let j = b as usize * nx + a as usize;
                if !edge[j] && thin[j] >= p.low && thin[j] > 0.0 {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edge
}

/// Canny applied independently to every z-slice.
pub fn canny3d_stack(v: &Volume, p: &CannyParams) -> Result<LabelVolume> {
    p.validate()?;
    let d = v.dims;
    let plane = d.slice_len();
    let mut labels = vec![0u32; d.len()];
    labels.par_chunks_mut(plane).enumerate().for_each(|(z, out)| {
        let e = canny_slice(v.slice(z), d.nx, d.ny, p);
        for (o, b) in out.iter_mut().zip(e) {
            *o = b as u32;
        }
    });
    LabelVolume::new(d, v.voxel_size, LabelKind::EdgeMask, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VoxelSize;

    fn params() -> CannyParams {
        CannyParams {
            sigma: 1.0,
            low: 0.05,
            high: 0.1,
        }
    }

    #[test]
    fn constant_has_no_edges() {
        let e = canny_slice(&vec![0.4; 256], 16, 16, &params());
        assert!(e.iter().all(|&b| !b));
    }

    #[test]
    fn vertical_step_single_line() {
        let (nx, ny) = (32, 16);
        let img: Vec<f32> = (0..nx * ny).map(|i| if i % nx < 16 { 0.2 } else { 0.8 }).collect();
        let e = canny_slice(&img, nx, ny, &params());
        // analytic gradient of a symmetric step peaks on columns 15 and 16
        // equally; the darker column wins
        for y in 0..ny {
            let cols: Vec<usize> = (0..nx).filter(|&x| e[y * nx + x]).collect();
            assert_eq!(cols, vec![15], "row {y}");
        }
    }

    #[test]
    fn hysteresis_connectivity() {
        let (nx, ny) = (16, 16);
        let p = CannyParams {
            sigma: 0.0,
            low: 0.05,
            high: 0.2,
        };
        // one step of varying contrast: strong on rows 2..6, weak on rows 6..10
        // (touching the strong part), and a separate weak step on rows 12..15
        let mut img = vec![0.0f32; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                let c = match y {
                    2..=5 => 1.0,
                    6..=9 => 0.3,
                    12..=14 => 0.3,
                    _ => 0.0,
                };
                let col = if y >= 12 { 11 } else { 5 };
                img[y * nx + x] = if x >= col { c } else { 0.0 };
            }
        }
        let e = canny_slice(&img, nx, ny, &p);
        // band by band: strong kept, weak touching strong kept, lone weak dropped
        let strong_rows = (2..=5).any(|y| e[y * nx + 4] || e[y * nx + 5]);
        let weak_attached = (7..=8).any(|y| e[y * nx + 4] || e[y * nx + 5]);
        let weak_isolated = (12..=14).any(|y| (0..nx).any(|x| e[y * nx + x]));
        assert!(strong_rows);
        assert!(weak_attached);
        assert!(!weak_isolated);
    }

    #[test]
    fn stack_rejects_bad_thresholds() {
        let v = Volume::filled(Dims::new(4, 4, 2), VoxelSize::isotropic(1.0), 0.5);
        let bad = CannyParams {
            sigma: 1.0,
            low: 0.2,
            high: 0.1,
        };
        assert!(canny3d_stack(&v, &bad).is_err());
        assert_eq!(canny3d_stack(&v, &params()).unwrap().count_nonzero(), 0);
    }
}
