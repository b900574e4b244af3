use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use crate::edt;
use crate::volume::{Dims, LabelVolume, Volume, Voxel};

/// Per-slice Euclidean distance (pixels) from each voxel to the nearest
/// myelin voxel. Slices without myelin are all zero.
pub fn edt2d_stack(myelin: &LabelVolume) -> Volume {
    let dims = myelin.dims;
    let sq = edt::squared_2d_slices(dims, |i| myelin.labels[i] != 0);
    let data = sq
        .par_iter()
        .map(|&d| if d >= edt::FAR { 0.0 } else { d.sqrt() as f32 })
        .collect();
    Volume {
        dims,
        voxel_size: myelin.voxel_size,
        data,
    }
}

fn neighbors8(nx: usize, ny: usize, p: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((p % nx) as i64, (p / nx) as i64);
    (-1i64..=1).flat_map(move |dy| {
        (-1i64..=1).filter_map(move |dx| {
            let (a, b) = (x + dx, y + dy);
            if (dx, dy) != (0, 0) && a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64 {
                Some(b as usize * nx + a as usize)
            } else {
                None
            }
        })
    })
}

/// 8-connected regional-maximum plateaus of `f` restricted to `f > 0`.
fn regional_maxima_2d(f: &[f32], nx: usize, ny: usize) -> Vec<Vec<usize>> {
    let n = nx * ny;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] || f[start] <= 0.0 {
            continue;
        }
        let v = f[start];
        if neighbors8(nx, ny, start).any(|q| f[q] > v) {
            continue;
        }
        let mut plateau = Vec::new();
        let mut is_max = true;
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            plateau.push(p);
            for q in neighbors8(nx, ny, p) {
                if f[q] > v {
                    is_max = false;
                } else if f[q] == v && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if is_max {
            out.push(plateau);
        }
    }
    out
}

fn centroid_pixel(region: &[usize], nx: usize, pool: &[usize]) -> usize {
    let n = region.len() as f64;
    let cx = region.iter().map(|&p| (p % nx) as f64).sum::<f64>() / n;
    let cy = region.iter().map(|&p| (p / nx) as f64).sum::<f64>() / n;
    let d2 = |p: usize| ((p % nx) as f64 - cx).powi(2) + ((p / nx) as f64 - cy).powi(2);
    *pool
        .iter()
        .min_by(|&&a, &&b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)))
        .expect("non-empty region")
}

fn order_seeds(dist: &Volume, mut seeds: Vec<Voxel>) -> Vec<Voxel> {
    let dims = dist.dims;
    seeds.sort_by(|a, b| {
        let va = dist.data[dims.index(a.x, a.y, a.z)];
        let vb = dist.data[dims.index(b.x, b.y, b.z)];
        vb.total_cmp(&va).then((a.z, a.y, a.x).cmp(&(b.z, b.y, b.x)))
    });
    seeds
}

fn per_slice(dist: &Volume, f: impl Fn(&[f32], usize, usize) -> Vec<usize> + Sync) -> Vec<Vec<Voxel>> {
    let d: Dims = dist.dims;
    (0..d.nz)
        .into_par_iter()
        .map(|z| {
            f(dist.slice(z), d.nx, d.ny)
                .into_iter()
                .map(|p| Voxel::new(p % d.nx, p / d.nx, z))
                .collect()
        })
        .collect()
}

fn maxima_slice(f: &[f32], nx: usize, _ny: usize) -> Vec<usize> {
    let ny = f.len() / nx;
    regional_maxima_2d(f, nx, ny)
        .iter()
        .map(|plateau| {
            // a rounded centroid off a non-convex plateau snaps back onto it
            centroid_pixel(plateau, nx, plateau)
        })
        .collect()
}

/// One seed per 8-connected regional-maximum plateau of each slice,
/// ordered by descending distance.
pub fn seeds_regional_maxima(dist: &Volume) -> Vec<Voxel> {
    let seeds = per_slice(dist, maxima_slice).into_iter().flatten().collect();
    order_seeds(dist, seeds)
}

/// Per-slice regional-maximum counts, for diagnostics.
pub fn regional_maxima_counts(dist: &Volume) -> Vec<usize> {
    per_slice(dist, maxima_slice).iter().map(Vec::len).collect()
}

#[derive(PartialEq)]
struct Item {
    value: f32,
    order: u64,
    p: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on value, FIFO among equal values
        self.value
            .total_cmp(&other.value)
            .then(other.order.cmp(&self.order))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Morphological reconstruction by dilation of `f - h` under `f`, over the
/// domain `f > 0`.
fn hmax_reconstruct(f: &[f32], nx: usize, ny: usize, h: f32) -> Vec<f32> {
    let mut rec: Vec<f32> = f.iter().map(|&v| if v > 0.0 { (v - h).max(0.0) } else { 0.0 }).collect();
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (p, &r) in rec.iter().enumerate() {
        if f[p] > 0.0 {
            heap.push(Item { value: r, order, p });
            order += 1;
        }
    }
    while let Some(Item { value, p, .. }) = heap.pop() {
        if value < rec[p] {
            continue;
        }
        for q in neighbors8(nx, ny, p) {
            if f[q] <= 0.0 {
                continue;
            }
            let cand = value.min(f[q]);
            if cand > rec[q] {
                rec[q] = cand;
                heap.push(Item { value: cand, order, p: q });
                order += 1;
            }
        }
    }
    rec
}

/// Marker-controlled watershed of `-f` on one slice, markers being the
/// H-maxima of `f`. Returns the region map (0 outside `f > 0`, regions
/// numbered from 1) and the region count.
pub fn watershed_slice(f: &[f32], nx: usize, ny: usize, h: f32) -> (Vec<u32>, usize) {
    let rec = hmax_reconstruct(f, nx, ny, h);
    let markers = regional_maxima_2d(&rec, nx, ny);
    let mut labels = vec![0u32; f.len()];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (k, m) in markers.iter().enumerate() {
        for &p in m {
            labels[p] = k as u32 + 1;
        }
    }
    for m in &markers {
        for &p in m {
            heap.push(Item { value: f[p], order, p });
            order += 1;
        }
    }
    while let Some(Item { p, .. }) = heap.pop() {
        let l = labels[p];
        for q in neighbors8(nx, ny, p) {
            if labels[q] == 0 && f[q] > 0.0 {
                labels[q] = l;
                heap.push(Item { value: f[q], order, p: q });
                order += 1;
            }
        }
    }
    (labels, markers.len())
}

fn watershed_seeds_slice(f: &[f32], nx: usize, h: f32) -> Vec<usize> {
    let ny = f.len() / nx;
    let (labels, n) = watershed_slice(f, nx, ny, h);
    let mut regions: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, &l) in labels.iter().enumerate() {
        if l > 0 {
            regions[l as usize - 1].push(p);
        }
    }
    regions
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let top = r.iter().map(|&p| f[p]).fold(f32::NEG_INFINITY, f32::max);
            let pool: Vec<usize> = r.iter().copied().filter(|&p| f[p] == top).collect();
            centroid_pixel(r, nx, &pool)
        })
        .collect()
}

/// One seed per watershed region of each slice: the region's deepest voxel
/// nearest to its centroid. Ordered by descending distance.
pub fn seeds_watershed_centroids(dist: &Volume, h: f64) -> Vec<Voxel> {
    let h = h as f32;
    let seeds = per_slice(dist, |f, nx, _| watershed_seeds_slice(f, nx, h))
        .into_iter()
        .flatten()
        .collect();
    order_seeds(dist, seeds)
}

/// Per-slice watershed seed counts, for diagnostics.
pub fn watershed_counts(dist: &Volume, h: f64) -> Vec<usize> {
    let h = h as f32;
    per_slice(dist, |f, nx, _| watershed_seeds_slice(f, nx, h))
        .iter()
        .map(Vec::len)
        .collect()
}
