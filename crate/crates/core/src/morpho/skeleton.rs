use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::ccl::{label_components, Connectivity};
use crate::edt;
use crate::error::{Error, Result};
use crate::volume::{BoundingBox, Dims, LabelVolume, VoxelSize};

/// Smallest component that can be skeletonized.
pub const MIN_SKELETON_VOXELS: usize = 27;

const EPS: f64 = 1e-3;

/// Ordered centerline of one axon, resampled to one-pitch spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub label: u32,
    /// Physical coordinates in nm, in the frame where voxel `i` spans
    /// `[i·s, (i+1)·s)`.
    pub points_nm: Vec<[f64; 3]>,
    /// Cumulative arc length in µm.
    pub arc_um: Vec<f64>,
    /// Isotropic pitch used for extraction, nm.
    pub pitch_nm: f64,
}

impl Skeleton {
    pub fn length_um(&self) -> f64 {
        self.arc_um.last().copied().unwrap_or(0.0)
    }
}

/// Isotropic nearest-neighbour resample of one label inside `bb`.
pub(crate) struct IsoMask {
    pub dims: Dims,
    pub mask: Vec<bool>,
    pub origin_nm: [f64; 3],
    pub pitch: f64,
}

pub(crate) fn iso_mask(labels: &LabelVolume, label: u32, bb: &BoundingBox) -> IsoMask {
    let vs = labels.voxel_size.to_array();
    let pitch = labels.voxel_size.min();
    let ext = bb.extent().to_array();
    let n: [usize; 3] = std::array::from_fn(|a| ((ext[a] as f64 * vs[a] / pitch) - 1e-9).ceil().max(1.0) as usize);
    let src = |a: usize, i: usize| -> usize {
        let c = (i as f64 + 0.5) * pitch / vs[a];
        bb.min[a] + (c.floor() as usize).min(ext[a] - 1)
    };
    let sx: Vec<usize> = (0..n[0]).map(|i| src(0, i)).collect();
    let sy: Vec<usize> = (0..n[1]).map(|i| src(1, i)).collect();
    let sz: Vec<usize> = (0..n[2]).map(|i| src(2, i)).collect();
    let dims = Dims::new(n[0], n[1], n[2]);
    let mut mask = Vec::with_capacity(dims.len());
    for &z in &sz {
        for &y in &sy {
            for &x in &sx {
                mask.push(labels.get(x, y, z) == label);
            }
        }
    }
    IsoMask {
        dims,
        mask,
        origin_nm: std::array::from_fn(|a| bb.min[a] as f64 * vs[a]),
        pitch,
    }
}

const STEPS: [(i64, i64, i64, f64); 26] = {
    let mut out = [(0i64, 0i64, 0i64, 0f64); 26];
    let mut k = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    let n = (dx * dx + dy * dy + dz * dz) as usize;
                    let len = match n {
                        1 => 1.0,
                        2 => std::f64::consts::SQRT_2,
                        _ => 1.732_050_807_568_877_2,
                    };
                    out[k] = (dx, dy, dz, len);
                    k += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

fn for_each_step(d: Dims, i: usize, mut f: impl FnMut(usize, f64)) {
    let (x, y, z) = d.coords(i);
    for &(dx, dy, dz, len) in &STEPS {
        if let Some(j) = d.checked_index(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
            f(j, len);
        }
    }
}

/// Dijkstra over 26-neighbour steps inside `mask`; a step `i → j` of
/// length `l` costs `l · (w(i) + w(j)) / 2`.
fn dijkstra(d: Dims, mask: &[bool], source: usize, w: &[f64]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; d.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((bits, i))) = heap.pop() {
        let di = f64::from_bits(bits);
        if di > dist[i] {
            continue;
        }
        for_each_step(d, i, |j, len| {
            if !mask[j] {
                return;
            }
            let nd = di + len * 0.5 * (w[i] + w[j]);
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Reverse((nd.to_bits(), j)));
            }
        });
    }
    dist
}

/// Farthest interior point from `from`, pulled onto the medial ridge: among
/// voxels whose geodesic distance plus inscribed radius comes within one
/// voxel of the maximum geodesic distance, take the largest radius.
fn far_point(d: Dims, mask: &[bool], dt: &[f64], from: usize) -> usize {
    let ones = vec![1.0; d.len()];
    let g = dijkstra(d, mask, from, &ones);
    let gmax = (0..d.len()).filter(|&i| mask[i]).map(|i| g[i]).fold(0.0, f64::max);
    let mut best = from;
    for i in 0..d.len() {
        if !mask[i] || g[i] + dt[i] + 1.0 < gmax {
            continue;
        }
        let better = dt[i] > dt[best] || (dt[i] == dt[best] && g[i] > g[best]);
        if better || g[best] + dt[best] + 1.0 < gmax {
            best = i;
        }
    }
    best
}

fn smooth5(p: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let h = 2.min(i).min(n - 1 - i);
            let win = &p[i - h..=i + h];
            let k = win.len() as f64;
            std::array::from_fn(|a| win.iter().map(|q| q[a]).sum::<f64>() / k)
        })
        .collect()
}

fn resample_unit(p: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = vec![p[0]];
    let dist = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let mut carried = 0.0;
    for w in p.windows(2) {
        let seg = dist(&w[0], &w[1]);
        if seg == 0.0 {
            continue;
        }
        let mut s = 1.0 - carried;
        while s <= seg + 1e-12 {
            let t = s / seg;
            out.push(std::array::from_fn(|a| w[0][a] + t * (w[1][a] - w[0][a])));
            s += 1.0;
        }
        carried = seg - (s - 1.0);
    }
    let last = *p.last().unwrap();
    if dist(out.last().unwrap(), &last) > 1e-6 {
        out.push(last);
    }
    out
}

/// Centerline of voxels labelled `label`, extracted on an isotropic
/// resample of their bounding box.
pub fn skeletonize(axons: &LabelVolume, label: u32) -> Result<Skeleton> {
    let bb = BoundingBox::of(axons.dims, |i| axons.labels[i] == label).ok_or(Error::MissingLabel(label))?;
    skeletonize_in(axons, label, &bb)
}

pub(crate) fn skeletonize_in(axons: &LabelVolume, label: u32, bb: &BoundingBox) -> Result<Skeleton> {
    let iso = iso_mask(axons, label, &bb.dilate(1, axons.dims));
    let d = iso.dims;
    let (comp, sizes) = label_components(d, Connectivity::TwentySix, |i| iso.mask[i]);
    let (best, &size) = sizes
        .iter()
        .enumerate()
        .max_by_key(|&(k, &s)| (s, Reverse(k)))
        .ok_or_else(|| Error::Degenerate(format!("axon {label} is empty after resampling")))?;
    if size < MIN_SKELETON_VOXELS {
        return Err(Error::Degenerate(format!(
            "axon {label} has {size} voxels, at least {MIN_SKELETON_VOXELS} are needed"
        )));
    }
    let keep = best as u32;
    let mask: Vec<bool> = comp.iter().map(|&c| c == keep).collect();
    let dt: Vec<f64> = edt::squared_3d(d, [1.0; 3], |i| !mask[i]).into_iter().map(f64::sqrt).collect();
    let a0 = (0..d.len()).filter(|&i| mask[i]).fold(None, |acc: Option<usize>, i| match acc {
        Some(b) if dt[b] >= dt[i] => Some(b),
        _ => Some(i),
    });
    let a0 = a0.expect("component is nonempty");
    let b = far_point(d, &mask, &dt, a0);
    let a = far_point(d, &mask, &dt, b);
    let speed: Vec<f64> = dt.iter().map(|&v| 1.0 / (v + EPS)).collect();
    let cost = dijkstra(d, &mask, a, &speed);
    let mut path = vec![b];
    let mut cur = b;
    while cur != a {
        let mut next = cur;
        for_each_step(d, cur, |j, _| {
            if mask[j] && (cost[j] < cost[next] || (cost[j] == cost[next] && j < next && next != cur)) {
                next = j;
            }
        });
        if next == cur {
            return Err(Error::Degenerate(format!("backtrace stalled on axon {label}")));
        }
        path.push(next);
        cur = next;
    }
    path.reverse();
    let pts: Vec<[f64; 3]> = path
        .iter()
        .map(|&i| {
            let (x, y, z) = d.coords(i);
            [x as f64, y as f64, z as f64]
        })
        .collect();
    let pts = resample_unit(&smooth5(&pts));
    let p = iso.pitch;
    let points_nm: Vec<[f64; 3]> = pts
        .iter()
        .map(|q| std::array::from_fn(|k| iso.origin_nm[k] + (q[k] + 0.5) * p))
        .collect();
    let mut arc_um = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    for (k, q) in pts.iter().enumerate() {
        if k > 0 {
            let r = &pts[k - 1];
            s += ((q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2) + (q[2] - r[2]).powi(2)).sqrt() * p * 1e-3;
        }
        arc_um.push(s);
    }
    Ok(Skeleton {
        label,
        points_nm,
        arc_um,
        pitch_nm: p,
    })
}

/// Voxel index containing a physical point, or `None` outside the grid.
pub(crate) fn voxel_at(dims: Dims, vs: VoxelSize, q: [f64; 3]) -> Option<usize> {
    let s = vs.to_array();
    let c: [f64; 3] = std::array::from_fn(|a| (q[a] / s[a]).floor());
    if c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    dims.checked_index(c[0] as i64, c[1] as i64, c[2] as i64)
}
