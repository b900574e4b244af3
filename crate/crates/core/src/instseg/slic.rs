use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelKind, LabelVolume, Volume};

/// A partition of the volume into 26-connected supervoxels labeled `1..=q`.
#[derive(Debug, Clone)]
pub struct SupervoxelMap {
    pub labels: LabelVolume,
    pub q: usize,
    pub target_size: usize,
    pub compactness: f64,
}

impl SupervoxelMap {
    /// Voxel count per supervoxel, indexed by label (index 0 unused).
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.q + 1];
        for &l in &self.labels.labels {
            s[l as usize] += 1;
        }
        s
    }
}

const ITERATIONS: usize = 10;

struct Grid {
    n: [usize; 3],
    cell: [f64; 3],
}

impl Grid {
    fn cell_of(&self, axis: usize, i: usize) -> usize {
        (((i as f64 + 0.5) / self.cell[axis]) as usize).min(self.n[axis] - 1)
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.n[1] + c[1]) * self.n[0] + c[0]
    }
}

/// SLIC clustering in (intensity, physical position) space. Seeds sit on a
/// regular grid whose physical spacing makes each cell hold about
/// `target_size` voxels; the distance is `ΔI² + (m/S)²·Δx²`.
pub fn slic_supervoxels(v: &Volume, target_size: usize, compactness: f64) -> Result<SupervoxelMap> {
    if target_size < 8 {
        return Err(Error::param("supervoxel target size must be >= 8"));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::param("compactness must be > 0"));
    }
    let d = v.dims;
    let s = v.voxel_size.to_array();
    let spacing = (target_size as f64 * s[0] * s[1] * s[2]).cbrt();
    let dn = d.to_array();
    let mut n = [1usize; 3];
    let mut cell = [0f64; 3];
    for a in 0..3 {
        n[a] = ((dn[a] as f64 * s[a] / spacing).round() as usize).clamp(1, dn[a]);
        cell[a] = dn[a] as f64 / n[a] as f64;
    }
    let grid = Grid { n, cell };
    let k = n[0] * n[1] * n[2];
    let mut centers = vec![[0f64; 4]; k];
    for kz in 0..n[2] {
        for ky in 0..n[1] {
            for kx in 0..n[0] {
                let c = [kx, ky, kz];
                let mut pos = [0f64; 3];
                let mut vox = [0usize; 3];
                for a in 0..3 {
                    let p = (c[a] as f64 + 0.5) * cell[a];
                    vox[a] = (p.floor() as usize).min(dn[a] - 1);
                    pos[a] = p * s[a];
                }
                let i = v.data[d.index(vox[0], vox[1], vox[2])] as f64;
                centers[grid.index(c)] = [i, pos[0], pos[1], pos[2]];
            }
        }
    }
    let w = (compactness / spacing).powi(2);
    let cells: [Vec<usize>; 3] = std::array::from_fn(|a| (0..dn[a]).map(|i| grid.cell_of(a, i)).collect());
    let mut assign = vec![0u32; d.len()];
    for _ in 0..ITERATIONS {
        assign.par_chunks_mut(d.slice_len()).enumerate().for_each(|(z, out)| {
            let pz = (z as f64 + 0.5) * s[2];
            let cz = cells[2][z];
            for y in 0..d.ny {
                let py = (y as f64 + 0.5) * s[1];
                let cy = cells[1][y];
                for x in 0..d.nx {
                    let px = (x as f64 + 0.5) * s[0];
                    let cx = cells[0][x];
                    let val = v.data[d.index(x, y, z)] as f64;
                    let mut best = (f64::INFINITY, u32::MAX);
                    for kz in cz.saturating_sub(1)..=(cz + 1).min(n[2] - 1) {
                        for ky in cy.saturating_sub(1)..=(cy + 1).min(n[1] - 1) {
                            for kx in cx.saturating_sub(1)..=(cx + 1).min(n[0] - 1) {
                                let ki = grid.index([kx, ky, kz]);
                                let c = &centers[ki];
                                let di = val - c[0];
                                let ds = (px - c[1]).powi(2) + (py - c[2]).powi(2) + (pz - c[3]).powi(2);
                                let dist = di * di + w * ds;
                                if dist < best.0 || (dist == best.0 && (ki as u32) < best.1) {
                                    best = (dist, ki as u32);
                                }
                            }
                        }
                    }
                    out[y * d.nx + x] = best.1;
                }
            }
        });
        // sequential accumulation keeps the update independent of threads
        let mut acc = vec![[0f64; 5]; k];
        for (i, &a) in assign.iter().enumerate() {
            let (x, y, z) = d.coords(i);
            let e = &mut acc[a as usize];
            e[0] += v.data[i] as f64;
            e[1] += (x as f64 + 0.5) * s[0];
            e[2] += (y as f64 + 0.5) * s[1];
            e[3] += (z as f64 + 0.5) * s[2];
            e[4] += 1.0;
        }
        for (c, e) in centers.iter_mut().zip(&acc) {
            if e[4] > 0.0 {
                *c = [e[0] / e[4], e[1] / e[4], e[2] / e[4], e[3] / e[4]];
            }
        }
    }
    let (labels, q) = enforce_connectivity(&assign, d);
    Ok(SupervoxelMap {
        labels: LabelVolume::new(d, v.voxel_size, LabelKind::Supervoxel, labels)?,
        q,
        target_size,
        compactness,
    })
}

/// Keep the largest 26-component of every cluster and hand the other
/// components to the largest adjacent settled cluster; relabel `1..=q` in
/// raster order of first appearance.
fn enforce_connectivity(assign: &[u32], d: Dims) -> (Vec<u32>, usize) {
    let mut comp = vec![u32::MAX; d.len()];
    let mut comp_label: Vec<u32> = Vec::new();
    let mut comp_voxels: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..d.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = comp_label.len() as u32;
        let l = assign[start];
        comp[start] = id;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for nb in d.neighbors26(i) {
                if comp[nb] == u32::MAX && assign[nb] == l {
                    comp[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        comp_label.push(l);
        comp_voxels.push(members);
    }
    let n_labels = assign.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut main: Vec<Option<usize>> = vec![None; n_labels];
    for (c, &l) in comp_label.iter().enumerate() {
        let slot = &mut main[l as usize];
        if slot.is_none_or(|m| comp_voxels[c].len() > comp_voxels[m].len()) {
            *slot = Some(c);
        }
    }
    let mut settled: Vec<bool> = (0..comp_label.len())
        .map(|c| main[comp_label[c] as usize] == Some(c))
        .collect();
    let mut size = vec![0usize; n_labels];
    for (c, &l) in comp_label.iter().enumerate() {
        if settled[c] {
            size[l as usize] = comp_voxels[c].len();
        }
    }
    let mut pending: Vec<usize> = (0..comp_label.len()).filter(|&c| !settled[c]).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &c in &pending {
            let mut best: Option<u32> = None;
            for &i in &comp_voxels[c] {
                for nb in d.neighbors26(i) {
                    let o = comp[nb] as usize;
                    if o == c || !settled[o] {
                        continue;
                    }
                    let l = comp_label[o];
                    if best.is_none_or(|b| size[l as usize] > size[b as usize] || (size[l as usize] == size[b as usize] && l < b)) {
                        best = Some(l);
                    }
                }
            }
            match best {
                Some(l) => {
                    comp_label[c] = l;
                    settled[c] = true;
                    size[l as usize] += comp_voxels[c].len();
                }
                None => still.push(c),
            }
        }
        if still.len() == pending.len() {
            // unreachable for a connected grid; settle in place to terminate
            for &c in &still {
                settled[c] = true;
            }
            break;
        }
        pending = still;
    }
    let mut remap = vec![0u32; n_labels];
    let mut q = 0u32;
    let mut out = vec![0u32; d.len()];
    for i in 0..d.len() {
        let l = comp_label[comp[i] as usize] as usize;
        if remap[l] == 0 {
            q += 1;
            remap[l] = q;
        }
        out[i] = remap[l];
    }
    (out, q as usize)
}
