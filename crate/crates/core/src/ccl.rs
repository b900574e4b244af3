//! Connected-component labeling and small-component removal.

use std::collections::VecDeque;

use crate::volume::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn neighbors(self, dims: Dims, idx: usize) -> Vec<usize> {
        match self {
            Connectivity::Six => dims.neighbors6(idx).collect(),
            Connectivity::TwentySix => dims.neighbors26(idx).collect(),
        }
    }
}

/// Components of the voxel set selected by `mask`, labeled 1.. in raster
/// order of their first voxel. Returns the label map and per-label sizes
/// (index 0 unused).
pub fn label_components(dims: Dims, conn: Connectivity, mask: impl Fn(usize) -> bool) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; dims.len()];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..dims.len() {
        if labels[start] != 0 || !mask(start) {
            continue;
        }
        let id = sizes.len() as u32;
        labels[start] = id;
        queue.push_back(start);
        let mut count = 0usize;
        while let Some(i) = queue.pop_front() {
            count += 1;
            for n in conn.neighbors(dims, i) {
                if labels[n] == 0 && mask(n) {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(count);
    }
    (labels, sizes)
}

/// Flood from `start` through voxels satisfying `mask`.
pub fn flood(dims: Dims, conn: Connectivity, start: usize, mask: impl Fn(usize) -> bool) -> Vec<usize> {
    if !mask(start) {
        return Vec::new();
    }
    let mut seen = std::collections::HashSet::new();
    seen.insert(start);
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for n in conn.neighbors(dims, i) {
            if mask(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    out
}

/// Remove components of each nonzero class smaller than `min_size` voxels.
/// Components are taken per class value; removed voxels become 0.
pub fn remove_small_components(labels: &mut [u32], dims: Dims, conn: Connectivity, min_size: usize) -> usize {
    if min_size <= 1 {
        return 0;
    }
    let mut visited = vec![false; labels.len()];
    let mut removed = 0;
    let mut queue = VecDeque::new();
    let mut comp = Vec::new();
    for start in 0..labels.len() {
        let class = labels[start];
        if class == 0 || visited[start] {
            continue;
        }
        comp.clear();
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            for n in conn.neighbors(dims, i) {
                if !visited[n] && labels[n] == class {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if comp.len() < min_size {
            for &i in &comp {
                labels[i] = 0;
            }
            removed += comp.len();
        }
    }
    removed
}
